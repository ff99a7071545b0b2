"""Closed lexicon backing the synthetic grammar.

Loaded from a TSV data file so the word inventory is versioned and
swappable.  Words flagged `test` form the evaluation-suite vocabulary;
unflagged words appear only in training corpora, which keeps transfer
measurable when negative examples on the test verbs are ablated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

SINGULAR = "singular"
PLURAL = "plural"

VERB_CATEGORIES = ("verb_intrans", "verb_trans", "verb_stim", "verb_say", "copula")


@dataclass(frozen=True)
class Word:
    category: str
    singular: str
    plural: str
    lemma: str
    animate: bool = False
    test: bool = False

    def form(self, number: str) -> str:
        return self.singular if number == SINGULAR else self.plural


@dataclass
class Lexicon:
    nouns: list[Word] = field(default_factory=list)
    verbs_intrans: list[Word] = field(default_factory=list)
    verbs_trans: list[Word] = field(default_factory=list)
    verbs_stim: list[Word] = field(default_factory=list)
    verbs_say: list[Word] = field(default_factory=list)
    copula: Word | None = None
    adjectives: list[str] = field(default_factory=list)
    prepositions: list[str] = field(default_factory=list)
    quant_neg: list[str] = field(default_factory=list)
    quant_pos: list[str] = field(default_factory=list)

    def all_verbs(self) -> list[Word]:
        out = self.verbs_intrans + self.verbs_trans + self.verbs_stim + self.verbs_say
        if self.copula is not None:
            out.append(self.copula)
        return out

    def verb_info(self, surface: str) -> tuple[Word, str] | None:
        return self._verb_index().get(surface)

    def noun_info(self, surface: str) -> tuple[Word, str] | None:
        return self._noun_index().get(surface)

    def _verb_index(self) -> dict[str, tuple[Word, str]]:
        if not hasattr(self, "_verb_idx"):
            self._verb_idx = {}
            for w in self.all_verbs():
                self._verb_idx[w.singular] = (w, SINGULAR)
                self._verb_idx[w.plural] = (w, PLURAL)
        return self._verb_idx

    def _noun_index(self) -> dict[str, tuple[Word, str]]:
        if not hasattr(self, "_noun_idx"):
            self._noun_idx = {}
            for w in self.nouns:
                self._noun_idx[w.singular] = (w, SINGULAR)
                self._noun_idx[w.plural] = (w, PLURAL)
        return self._noun_idx

    def subset(self, scope: str) -> "Lexicon":
        """'full', 'test-only' (suite vocabulary) or 'train-only' (disjoint from it).

        Closed-class items (prepositions, quantifiers, the copula) are kept in
        every scope; only content words are filtered.
        """
        if scope == "full":
            return self
        if scope not in ("test-only", "train-only"):
            raise ValueError(f"unknown lexicon scope {scope!r}")
        want_test = scope == "test-only"

        def keep(words):
            kept = [w for w in words if w.test == want_test]
            return kept or list(words)  # never empty a required slot

        return Lexicon(
            nouns=keep(self.nouns),
            verbs_intrans=keep(self.verbs_intrans),
            verbs_trans=keep(self.verbs_trans),
            verbs_stim=keep(self.verbs_stim),
            verbs_say=list(self.verbs_say),
            copula=self.copula,
            adjectives=list(self.adjectives),
            prepositions=list(self.prepositions),
            quant_neg=list(self.quant_neg),
            quant_pos=list(self.quant_pos),
        )


def _parse_flags(raw: str) -> tuple[bool, bool]:
    flags = set() if raw == "-" else set(raw.split(","))
    return "animate" in flags, "test" in flags


def load_lexicon(path: str | None = None) -> Lexicon:
    if path is None:
        text = resources.files("neglm.data").joinpath("lexicon.tsv").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()

    lex = Lexicon()
    for line in text.splitlines():
        line = line.strip("\n")
        if not line or line.startswith("#"):
            continue
        category, sg, pl, lemma, flags = line.split("\t")
        animate, test = _parse_flags(flags)
        if category == "noun":
            lex.nouns.append(Word(category, sg, pl, lemma, animate, test))
        elif category in ("verb_intrans", "verb_trans", "verb_stim", "verb_say"):
            word = Word(category, sg, pl, lemma, animate, test)
            getattr(lex, {
                "verb_intrans": "verbs_intrans",
                "verb_trans": "verbs_trans",
                "verb_stim": "verbs_stim",
                "verb_say": "verbs_say",
            }[category]).append(word)
        elif category == "copula":
            lex.copula = Word(category, sg, pl, lemma, animate, test)
        elif category == "adj":
            lex.adjectives.append(sg)
        elif category == "prep":
            lex.prepositions.append(sg)
        elif category == "quant_neg":
            lex.quant_neg.append(sg)
        elif category == "quant_pos":
            lex.quant_pos.append(sg)
        else:
            raise ValueError(f"unknown lexicon category {category!r}")
    if lex.copula is None:
        raise ValueError("lexicon has no copula entry")
    return lex


def load_irregular_verbs(path: str | None = None) -> dict[str, str]:
    """Singular<->plural pairs that the suffix rules cannot handle, both directions."""
    if path is None:
        text = resources.files("neglm.data").joinpath("irregular_verbs.tsv").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    table = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        sg, pl = line.split("\t")
        table[sg] = pl
        table[pl] = sg
    return table
