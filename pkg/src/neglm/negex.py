"""Negative tokens and negative sentences from annotated training data.

A target word is a present-tense verb or a reflexive pronoun; its
negatives are the opposite-number forms.  Targets that cannot be
inflected are skipped with a warning count rather than failing the run:
negative examples are allowed to be incomplete and noisy.

This module also owns the annotated-corpus file format and the canonical
construction-tag inventory used across the toolkit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from neglm.lexicon import PLURAL, SINGULAR, load_irregular_verbs

KIND_PRESENT_VERB = "present-verb"
KIND_REFLEXIVE = "reflexive"

REFLEXIVE_NUMBER = {"himself": SINGULAR, "herself": SINGULAR, "themselves": PLURAL}

# Tags a corpus generator may emit (training constructions) plus the
# evaluation-only ones; "none" marks untagged external text.
CORPUS_CONSTRUCTIONS = (
    "simple",
    "across-pp",
    "across-src",
    "across-orc",
    "across-orc-no-that",
    "short-vp",
    "long-vp",
    "reflexive",
    "in-complement",
    "npi",
)
SUITE_CONSTRUCTIONS = (
    "simple",
    "in-complement",
    "short-vp",
    "long-vp",
    "across-pp",
    "across-src",
    "across-orc",
    "across-orc-no-that",
    "in-orc",
    "in-orc-no-that",
    "refl-simple",
    "refl-complement",
    "refl-across-orc",
    "npi-simple",
    "npi-across-orc",
)
ALL_CONSTRUCTIONS = ("none",) + CORPUS_CONSTRUCTIONS + tuple(
    t for t in SUITE_CONSTRUCTIONS if t not in CORPUS_CONSTRUCTIONS
)

_IRREGULAR = load_irregular_verbs()
# Stems taking -es. A bare final "s" is not enough: "amuses" is amuse+s,
# while "misses" is miss+es, so the sibilant cluster must be explicit.
_ES_STEMS = ("ss", "x", "z", "ch", "sh")


def flip_number(number: str) -> str:
    if number == SINGULAR:
        return PLURAL
    if number == PLURAL:
        return SINGULAR
    raise ValueError(f"unknown number {number!r}")


def flip_verb_number(surface: str, from_number: str) -> str:
    """Opposite-number form of a present-tense verb.

    Irregulars come from the versioned table; regulars follow suffix rules
    (-ies <-> -y, -es after s/x/z/ch/sh, plain -s otherwise).
    """
    if from_number not in (SINGULAR, PLURAL):
        raise ValueError(f"unknown number {from_number!r}")
    if surface in _IRREGULAR:
        return _IRREGULAR[surface]
    if from_number == SINGULAR:
        # 3sg form -> base form
        if surface.endswith("ies") and len(surface) > 3:
            return surface[:-3] + "y"
        if surface.endswith("es") and surface[:-2].endswith(_ES_STEMS):
            return surface[:-2]
        if surface.endswith("s") and not surface.endswith("ss") and len(surface) > 1:
            return surface[:-1]
        raise ValueError(f"not inflectable: {surface!r}")
    # base form -> 3sg form
    if surface.endswith("s") and not surface.endswith("ss"):
        raise ValueError(f"not inflectable: {surface!r}")
    if surface.endswith("y") and len(surface) > 1 and surface[-2] not in "aeiou":
        return surface[:-1] + "ies"
    if surface.endswith(_ES_STEMS):
        return surface + "es"
    return surface + "s"


def flip_reflexive(surface: str) -> list[str]:
    if surface == "themselves":
        return ["himself", "herself"]
    if surface in ("himself", "herself"):
        return ["themselves"]
    raise ValueError(f"not a reflexive pronoun: {surface!r}")


@dataclass(frozen=True)
class GoldTag:
    """Gold annotation emitted by the generator (or a tagger) for one token."""

    position: int
    kind: str  # present-verb | reflexive
    number: str
    lemma: str


@dataclass(frozen=True)
class TargetAnnotation:
    position: int
    kind: str
    number: str
    lemma: str
    negatives: tuple[str, ...]


@dataclass
class AnnotatedSentence:
    tokens: list[str]
    targets: list[TargetAnnotation] = field(default_factory=list)
    construction: str = "none"


def annotate_targets(tokens: list[str], tags: list[GoldTag], construction: str = "none") -> tuple[AnnotatedSentence, int]:
    """Turn gold tags into target annotations with negative tokens.

    Returns the annotated sentence and the number of tags skipped because
    the surface form could not be inflected.
    """
    targets = []
    skipped = 0
    for tag in sorted(tags, key=lambda t: t.position):
        if not 0 <= tag.position < len(tokens):
            raise ValueError(f"tag position {tag.position} out of bounds")
        surface = tokens[tag.position]
        if tag.kind == KIND_PRESENT_VERB:
            try:
                negatives = (flip_verb_number(surface, tag.number),)
            except ValueError:
                skipped += 1
                continue
        elif tag.kind == KIND_REFLEXIVE:
            negatives = tuple(flip_reflexive(surface))
        else:
            raise ValueError(f"unknown target kind {tag.kind!r}")
        targets.append(TargetAnnotation(tag.position, tag.kind, tag.number, tag.lemma, negatives))
    return AnnotatedSentence(list(tokens), targets, construction), skipped


def negative_sentences(sentence: AnnotatedSentence) -> list[list[str]]:
    """One full negative sentence per (target, negative token) pair.

    Each output differs from the original at exactly one position; order is
    by target position, then by negative-list order.
    """
    out = []
    for target in sentence.targets:
        for neg in target.negatives:
            tokens = list(sentence.tokens)
            tokens[target.position] = neg
            out.append(tokens)
    return out


def filter_targets_by_lemma(corpus: list[AnnotatedSentence], excluded_lemmas: set[str]) -> list[AnnotatedSentence]:
    """Drop target annotations whose lemma is excluded; tokens are untouched."""
    excluded = {l.lower() for l in excluded_lemmas}
    return [
        replace_targets(s, [t for t in s.targets if t.lemma.lower() not in excluded])
        for s in corpus
    ]


def filter_targets_by_construction(corpus: list[AnnotatedSentence], excluded_tag: str) -> list[AnnotatedSentence]:
    """Drop all target annotations inside sentences tagged `excluded_tag`."""
    if excluded_tag not in ALL_CONSTRUCTIONS:
        raise ValueError(f"unknown construction tag {excluded_tag!r}")
    return [
        replace_targets(s, []) if s.construction == excluded_tag else replace_targets(s, list(s.targets))
        for s in corpus
    ]


def replace_targets(sentence: AnnotatedSentence, targets: list[TargetAnnotation]) -> AnnotatedSentence:
    return AnnotatedSentence(sentence.tokens, targets, sentence.construction)


# ---------------------------------------------------------------------------
# annotated corpus file format
# ---------------------------------------------------------------------------
# One sentence per line, three tab-separated fields:
#   tokens (space-separated) <TAB> construction tag <TAB> target records
# where target records are semicolon-separated "position,kind,number,lemma,neg1|neg2".
# UTF-8, LF line endings.


def format_sentence(sentence: AnnotatedSentence) -> str:
    records = ";".join(
        f"{t.position},{t.kind},{t.number},{t.lemma},{'|'.join(t.negatives)}"
        for t in sentence.targets
    )
    return "\t".join([" ".join(sentence.tokens), sentence.construction, records])


def parse_sentence(line: str) -> AnnotatedSentence:
    tokens_field, construction, records = line.split("\t")
    tokens = tokens_field.split(" ")
    targets = []
    if records:
        for rec in records.split(";"):
            pos, kind, number, lemma, negs = rec.split(",")
            targets.append(TargetAnnotation(int(pos), kind, number, lemma, tuple(negs.split("|"))))
    return AnnotatedSentence(tokens, targets, construction)


def write_corpus(path, corpus: list[AnnotatedSentence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in corpus:
            f.write(format_sentence(s))
            f.write("\n")


def read_corpus(path) -> list[AnnotatedSentence]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line:
                out.append(parse_sentence(line))
    return out


def tag_tokens(tokens: list[str], lexicon) -> list[GoldTag]:
    """Best-effort closed-lexicon tagger for raw text without gold annotations."""
    tags = []
    for i, tok in enumerate(tokens):
        if tok in REFLEXIVE_NUMBER:
            tags.append(GoldTag(i, KIND_REFLEXIVE, REFLEXIVE_NUMBER[tok], tok))
            continue
        info = lexicon.verb_info(tok)
        if info is not None:
            word, number = info
            tags.append(GoldTag(i, KIND_PRESENT_VERB, number, word.lemma))
    return tags
