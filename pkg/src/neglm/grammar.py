"""Template grammar for agreement-focused synthetic English.

One builder per construction produces a grammatical sentence, its gold
target tags, and the critical position whose substitution yields the
minimally different ungrammatical twin.  The corpus generator and the
evaluation-suite builder share these templates, and `is_grammatical`
re-checks any sentence against its construction so generated data can be
validated independently of generation.

Every embedded noun draws its number independently of the subject, so
roughly half of all non-local dependencies carry an opposite-number
attractor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from neglm.lexicon import PLURAL, SINGULAR, Lexicon, Word
from neglm.negex import (
    KIND_PRESENT_VERB,
    KIND_REFLEXIVE,
    REFLEXIVE_NUMBER,
    GoldTag,
    flip_verb_number,
)

END = "."


@dataclass
class Draft:
    tokens: list[str]
    tags: list[GoldTag]
    critical: int  # index of the token that flips in a minimal pair


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def _number(rng: np.random.Generator) -> str:
    return SINGULAR if rng.integers(2) == 0 else PLURAL


def _noun(rng, lex: Lexicon, animate: bool | None = None, exclude: set[str] = frozenset()) -> tuple[Word, str]:
    pool = [n for n in lex.nouns if (animate is None or n.animate == animate) and n.lemma not in exclude]
    if not pool:
        raise ValueError("lexicon has no noun matching the requested constraints")
    return _pick(rng, pool), _number(rng)


def _attractor_number(rng, subject_number: str, match_bias: float) -> str:
    """Number of an intervening noun; match_bias = P(same number as the subject).

    0.5 leaves the attractor independent (the evaluation-suite setting);
    corpus generation may skew it the way naturalistic text does, which
    keeps lazy nearest-noun agreement viable and the construction hard.
    """
    if rng.random() < match_bias:
        return subject_number
    return PLURAL if subject_number == SINGULAR else SINGULAR


def _verb_tag(pos: int, word: Word, number: str) -> GoldTag:
    return GoldTag(pos, KIND_PRESENT_VERB, number, word.lemma)


def _reflexive_for(rng, number: str) -> str:
    if number == PLURAL:
        return "themselves"
    return _pick(rng, ["himself", "herself"])


def _predicate(rng, lex: Lexicon, number: str, animate: bool, suite: bool, offset: int):
    """Verb phrase agreeing with a subject of the given number/animacy.

    Returns (tokens, tags, verb_index).  Suite drafts stick to the plain
    shapes (bare intransitive, copula + adjective); corpus drafts also use
    transitive and stimulus verbs for variety.
    """
    if animate:
        kinds = ["intrans"] if suite else ["intrans", "intrans", "copula", "trans"]
    else:
        kinds = ["copula"] if suite else ["copula", "copula", "stim"]
    kind = _pick(rng, kinds)
    if kind == "intrans":
        verb = _pick(rng, lex.verbs_intrans)
        return [verb.form(number)], [_verb_tag(offset, verb, number)], offset
    if kind == "copula":
        cop = lex.copula
        adj = _pick(rng, lex.adjectives)
        return [cop.form(number), adj], [_verb_tag(offset, cop, number)], offset
    if kind == "trans":
        verb = _pick(rng, lex.verbs_trans)
        obj, obj_number = _noun(rng, lex)
        return (
            [verb.form(number), "the", obj.form(obj_number)],
            [_verb_tag(offset, verb, number)],
            offset,
        )
    # stimulus verb: inanimate subject, animate object
    verb = _pick(rng, lex.verbs_stim)
    obj, obj_number = _noun(rng, lex, animate=True)
    return (
        [verb.form(number), "the", obj.form(obj_number)],
        [_verb_tag(offset, verb, number)],
        offset,
    )


def build_simple(rng, lex, suite=False) -> Draft:
    subj, number = _noun(rng, lex, animate=True if suite else None)
    pred, tags, verb_pos = _predicate(rng, lex, number, subj.animate, suite, offset=2)
    return Draft(["the", subj.form(number)] + pred + [END], tags, verb_pos)


def build_across_pp(rng, lex, suite=False, attractor_bias=0.5) -> Draft:
    subj, number = _noun(rng, lex, animate=True if suite else None)
    prep = _pick(rng, lex.prepositions).split(" ")
    attractor, _ = _noun(rng, lex, exclude={subj.lemma})
    att_number = _attractor_number(rng, number, attractor_bias)
    head = ["the", subj.form(number)] + prep + ["the", attractor.form(att_number)]
    pred, tags, verb_pos = _predicate(rng, lex, number, subj.animate, suite, offset=len(head))
    return Draft(head + pred + [END], tags, verb_pos)


def build_across_src(rng, lex, suite=False, attractor_bias=0.5) -> Draft:
    subj, number = _noun(rng, lex, animate=True)
    emb_verb = _pick(rng, lex.verbs_trans)
    obj, _ = _noun(rng, lex, exclude={subj.lemma})
    obj_number = _attractor_number(rng, number, attractor_bias)
    head = ["the", subj.form(number), "that", emb_verb.form(number), "the", obj.form(obj_number)]
    pred, tags, verb_pos = _predicate(rng, lex, number, True, suite, offset=len(head))
    tags = [_verb_tag(3, emb_verb, number)] + tags
    return Draft(head + pred + [END], tags, verb_pos)


def _build_orc(rng, lex, suite, with_that, critical_on_embedded=False, reflexive=False) -> Draft:
    subj, number = _noun(rng, lex, animate=True if (suite and reflexive) else None)
    if reflexive and not subj.animate:
        subj, number = _noun(rng, lex, animate=True)
    emb_subj, emb_number = _noun(rng, lex, animate=True, exclude={subj.lemma})
    emb_verb = _pick(rng, [v for v in lex.verbs_trans if v.lemma != "have"])
    head = ["the", subj.form(number)]
    if with_that:
        head.append("that")
    head += ["the", emb_subj.form(emb_number)]
    emb_pos = len(head)
    head.append(emb_verb.form(emb_number))
    tags = [_verb_tag(emb_pos, emb_verb, emb_number)]
    if reflexive:
        main_verb = _pick(rng, [v for v in lex.verbs_trans if v.lemma != "have"])
        refl = _reflexive_for(rng, number)
        tokens = head + [main_verb.form(number), refl, END]
        tags.append(_verb_tag(len(head), main_verb, number))
        tags.append(GoldTag(len(head) + 1, KIND_REFLEXIVE, number, refl))
        critical = len(head) + 1
    else:
        pred, pred_tags, verb_pos = _predicate(rng, lex, number, subj.animate, suite, offset=len(head))
        tokens = head + pred + [END]
        tags += pred_tags
        critical = emb_pos if critical_on_embedded else verb_pos
    return Draft(tokens, tags, critical)


def build_across_orc(rng, lex, suite=False) -> Draft:
    if suite:
        return _build_orc(rng, lex, suite, with_that=True)
    variant = _pick(rng, ["plain"] * 4 + ["reflexive"])
    return _build_orc(rng, lex, suite, with_that=True, reflexive=variant == "reflexive")


def build_across_orc_no_that(rng, lex, suite=False) -> Draft:
    if suite:
        return _build_orc(rng, lex, suite, with_that=False)
    variant = _pick(rng, ["plain"] * 4 + ["reflexive"])
    return _build_orc(rng, lex, suite, with_that=False, reflexive=variant == "reflexive")


def build_in_orc(rng, lex, suite=False) -> Draft:
    return _build_orc(rng, lex, suite, with_that=True, critical_on_embedded=True)


def build_in_orc_no_that(rng, lex, suite=False) -> Draft:
    return _build_orc(rng, lex, suite, with_that=False, critical_on_embedded=True)


def build_short_vp(rng, lex, suite=False) -> Draft:
    subj, number = _noun(rng, lex, animate=True)
    v1 = _pick(rng, lex.verbs_intrans)
    v2 = _pick(rng, [v for v in lex.verbs_intrans if v.lemma != v1.lemma])
    tokens = ["the", subj.form(number), v1.form(number), "and", v2.form(number), END]
    tags = [_verb_tag(2, v1, number), _verb_tag(4, v2, number)]
    return Draft(tokens, tags, 4)


def build_long_vp(rng, lex, suite=False) -> Draft:
    subj, number = _noun(rng, lex, animate=True)
    v1 = _pick(rng, lex.verbs_trans)
    n2, n2_number = _noun(rng, lex, exclude={subj.lemma})
    prep = _pick(rng, [p for p in lex.prepositions if " " not in p])
    n3, n3_number = _noun(rng, lex)
    head = [
        "the", subj.form(number), v1.form(number),
        "the", n2.form(n2_number), prep, "the", n3.form(n3_number), "and",
    ]
    v2_pos = len(head)
    if rng.integers(2) == 0:
        v2 = _pick(rng, lex.verbs_intrans)
        tail = [v2.form(number), END]
    else:
        v2 = _pick(rng, [v for v in lex.verbs_trans if v.lemma != v1.lemma])
        n4, n4_number = _noun(rng, lex)
        tail = [v2.form(number), "the", n4.form(n4_number), END]
    tags = [_verb_tag(2, v1, number), _verb_tag(v2_pos, v2, number)]
    return Draft(head + tail, tags, v2_pos)


def build_reflexive(rng, lex, suite=False) -> Draft:
    if not suite and rng.integers(4) == 0:
        return build_refl_complement(rng, lex, suite=False)
    subj, number = _noun(rng, lex, animate=True)
    verb = _pick(rng, [v for v in lex.verbs_trans if v.lemma != "have"])
    refl = _reflexive_for(rng, number)
    tokens = ["the", subj.form(number), verb.form(number), refl, END]
    tags = [_verb_tag(2, verb, number), GoldTag(3, KIND_REFLEXIVE, number, refl)]
    return Draft(tokens, tags, 3)


def build_refl_complement(rng, lex, suite=False) -> Draft:
    matrix, m_number = _noun(rng, lex, animate=True)
    say = _pick(rng, lex.verbs_say)
    subj, number = _noun(rng, lex, animate=True, exclude={matrix.lemma})
    verb = _pick(rng, [v for v in lex.verbs_trans if v.lemma != "have"])
    refl = _reflexive_for(rng, number)
    tokens = [
        "the", matrix.form(m_number), say.form(m_number), "that",
        "the", subj.form(number), verb.form(number), refl, END,
    ]
    tags = [
        _verb_tag(2, say, m_number),
        _verb_tag(6, verb, number),
        GoldTag(7, KIND_REFLEXIVE, number, refl),
    ]
    return Draft(tokens, tags, 7)


def build_refl_across_orc(rng, lex, suite=False) -> Draft:
    return _build_orc(rng, lex, suite, with_that=True, reflexive=True)


def build_in_complement(rng, lex, suite=False) -> Draft:
    matrix, m_number = _noun(rng, lex, animate=True)
    say = _pick(rng, lex.verbs_say)
    subj, number = _noun(rng, lex, animate=True if suite else None, exclude={matrix.lemma})
    head = ["the", matrix.form(m_number), say.form(m_number), "that", "the", subj.form(number)]
    pred, tags, verb_pos = _predicate(rng, lex, number, subj.animate, suite, offset=len(head))
    tags = [_verb_tag(2, say, m_number)] + tags
    return Draft(head + pred + [END], tags, verb_pos)


def _build_npi(rng, lex, suite, with_orc) -> Draft:
    subj, _ = _noun(rng, lex, animate=True)
    if suite:
        quant, ever = "no", True
    else:
        variant = _pick(rng, ["no-ever", "no-ever", "no", "most", "most"])
        quant = lex.quant_neg[0] if variant.startswith("no") else _pick(rng, lex.quant_pos)
        ever = variant == "no-ever"
    head = [quant, subj.plural]
    tags = []
    if with_orc:
        emb_subj, emb_number = _noun(rng, lex, animate=True, exclude={subj.lemma})
        emb_verb = _pick(rng, [v for v in lex.verbs_trans if v.lemma != "have"])
        head += ["that", "the", emb_subj.form(emb_number)]
        tags.append(_verb_tag(len(head), emb_verb, emb_number))
        head.append(emb_verb.form(emb_number))
    tags.append(GoldTag(len(head), KIND_PRESENT_VERB, PLURAL, "have"))
    tokens = head + ["have"] + (["ever"] if ever else []) + ["been", _pick(rng, lex.adjectives), END]
    return Draft(tokens, tags, 0)


def build_npi(rng, lex, suite=False) -> Draft:
    with_orc = (not suite) and rng.integers(4) == 0
    return _build_npi(rng, lex, suite, with_orc)


def build_npi_simple(rng, lex, suite=False) -> Draft:
    return _build_npi(rng, lex, suite=True, with_orc=False)


def build_npi_across_orc(rng, lex, suite=False) -> Draft:
    return _build_npi(rng, lex, suite=True, with_orc=True)


BUILDERS = {
    "simple": build_simple,
    "across-pp": build_across_pp,
    "across-src": build_across_src,
    "across-orc": build_across_orc,
    "across-orc-no-that": build_across_orc_no_that,
    "in-orc": build_in_orc,
    "in-orc-no-that": build_in_orc_no_that,
    "short-vp": build_short_vp,
    "long-vp": build_long_vp,
    "reflexive": build_reflexive,
    "refl-simple": build_reflexive,
    "refl-complement": build_refl_complement,
    "refl-across-orc": build_refl_across_orc,
    "in-complement": build_in_complement,
    "npi": build_npi,
    "npi-simple": build_npi_simple,
    "npi-across-orc": build_npi_across_orc,
}


def build_sentence(
    rng, lex: Lexicon, construction: str, suite: bool = False, attractor_bias: float = 0.5,
) -> Draft:
    try:
        builder = BUILDERS[construction]
    except KeyError:
        raise ValueError(f"unknown construction tag {construction!r}") from None
    if construction in ("across-pp", "across-src"):
        return builder(rng, lex, suite=suite, attractor_bias=attractor_bias)
    return builder(rng, lex, suite=suite)


def ungrammatical_twin(rng, lex: Lexicon, draft: Draft) -> list[str]:
    """Flip the critical token; the result differs at exactly that position."""
    tokens = list(draft.tokens)
    surface = tokens[draft.critical]
    if surface in REFLEXIVE_NUMBER:
        if surface == "themselves":
            tokens[draft.critical] = _pick(rng, ["himself", "herself"])
        else:
            tokens[draft.critical] = "themselves"
    elif surface in lex.quant_neg:
        tokens[draft.critical] = _pick(rng, lex.quant_pos)
    else:
        tag = next(t for t in draft.tags if t.position == draft.critical)
        tokens[draft.critical] = flip_verb_number(surface, tag.number)
    return tokens


# ---------------------------------------------------------------------------
# grammaticality checking (independent of generation)
# ---------------------------------------------------------------------------


def _scan(tokens, lex: Lexicon):
    nouns, verbs, reflexives = [], [], []
    for i, tok in enumerate(tokens):
        if tok in REFLEXIVE_NUMBER:
            reflexives.append((i, REFLEXIVE_NUMBER[tok]))
            continue
        v = lex.verb_info(tok)
        if v is not None:
            verbs.append((i, v[1]))
            continue
        n = lex.noun_info(tok)
        if n is not None:
            nouns.append((i, n[1], n[0].animate))
    return nouns, verbs, reflexives


def is_grammatical(tokens: list[str], construction: str, lex: Lexicon) -> bool:
    """Number-agreement / NPI-licensing check for a known construction."""
    nouns, verbs, reflexives = _scan(tokens, lex)

    def noun_num(i):
        return nouns[i][1]

    def verb_num(i):
        return verbs[i][1]

    try:
        if construction in ("simple", "across-pp"):
            return verb_num(0) == noun_num(0)
        if construction in ("across-src",):
            return verb_num(0) == noun_num(0) and verb_num(1) == noun_num(0)
        if construction in ("across-orc", "across-orc-no-that", "in-orc", "in-orc-no-that"):
            ok = verb_num(0) == noun_num(1) and verb_num(1) == noun_num(0)
            if reflexives:
                ok = ok and reflexives[0][1] == noun_num(0)
            return ok
        if construction in ("short-vp", "long-vp"):
            and_pos = tokens.index("and")
            first = next(num for i, num in verbs if i < and_pos)
            second = next(num for i, num in verbs if i > and_pos)
            return first == noun_num(0) and second == noun_num(0)
        if construction in ("reflexive", "refl-simple", "refl-complement"):
            if "that" in tokens:  # complement shape
                return (
                    verb_num(0) == noun_num(0)
                    and verb_num(1) == noun_num(1)
                    and reflexives[0][1] == noun_num(1)
                )
            return verb_num(0) == noun_num(0) and reflexives[0][1] == noun_num(0)
        if construction == "refl-across-orc":
            return (
                verb_num(0) == noun_num(1)
                and verb_num(1) == noun_num(0)
                and reflexives[0][1] == noun_num(0)
            )
        if construction == "in-complement":
            return verb_num(0) == noun_num(0) and verb_num(1) == noun_num(1)
        if construction in ("npi", "npi-simple", "npi-across-orc"):
            if "ever" in tokens and tokens[0] not in lex.quant_neg:
                return False
            have_pos = tokens.index("have")
            for i, num in verbs:
                if i < have_pos:  # embedded ORC verb
                    if num != noun_num(1):
                        return False
            return True
        if construction == "none":
            return True
    except (IndexError, StopIteration):
        return False
    raise ValueError(f"unknown construction tag {construction!r}")
