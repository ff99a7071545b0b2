"""Synthetic annotated corpora: generation, vocabulary, augmentation, splits.

A corpus is a list of AnnotatedSentence drawn from the template grammar
with a configurable construction mix, so the frequency of any syntactic
pattern (most importantly object relative clauses) is an experimental
knob rather than an accident of the source text.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from neglm import grammar, negex
from neglm.lexicon import Lexicon, load_lexicon

UNK, BOS, EOS = "<unk>", "<bos>", "<eos>"
RESERVED = (UNK, BOS, EOS)
UNK_ID, BOS_ID, EOS_ID = 0, 1, 2

DEFAULT_MIX = {
    "simple": 0.25,
    "across-pp": 0.13,
    "across-src": 0.12,
    "across-orc": 0.01,
    "across-orc-no-that": 0.01,
    "short-vp": 0.06,
    "long-vp": 0.10,
    "reflexive": 0.12,
    "in-complement": 0.12,
    "npi": 0.08,
}

ORC_TAGS = ("across-orc", "across-orc-no-that")


@dataclass
class CorpusConfig:
    num_sentences: int
    mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    seed: int = 0
    lexicon_path: str | None = None
    lexicon_scope: str = "full"  # full | train-only | test-only
    max_len: int = 20
    # P(intervening noun matches the subject number) in PP / SRC sentences;
    # 0.5 = independent, higher keeps nearest-noun agreement viable
    attractor_match_bias: float = 0.5


def _validate_mix(mix: dict[str, float]) -> tuple[list[str], np.ndarray]:
    for tag in mix:
        if tag not in negex.CORPUS_CONSTRUCTIONS:
            raise ValueError(f"unknown corpus construction {tag!r}")
    tags = sorted(mix)
    probs = np.array([mix[t] for t in tags], dtype=np.float64)
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError(f"construction mix must sum to 1, got {probs.sum()!r}")
    return tags, probs


def _sentence_for_tag(
    rng: np.random.Generator, lex: Lexicon, tag: str, max_len: int, attractor_bias: float = 0.5,
) -> negex.AnnotatedSentence:
    draft = grammar.build_sentence(rng, lex, tag, attractor_bias=attractor_bias)
    if len(draft.tokens) > max_len:
        raise ValueError(f"template for {tag!r} exceeds max sentence length {max_len}")
    sentence, skipped = negex.annotate_targets(draft.tokens, draft.tags, tag)
    assert skipped == 0, "generator lexicon must be fully inflectable"
    return sentence


def generate_synthetic(config: CorpusConfig, lexicon: Lexicon | None = None) -> list[negex.AnnotatedSentence]:
    """Sample sentences with tags distributed according to the mix."""
    lex = (lexicon or load_lexicon(config.lexicon_path)).subset(config.lexicon_scope)
    if not lex.nouns or not lex.all_verbs():
        raise ValueError("empty lexicon")
    tags, probs = _validate_mix(config.mix)
    rng = np.random.default_rng(config.seed)
    choices = rng.choice(len(tags), size=config.num_sentences, p=probs)
    return [_sentence_for_tag(rng, lex, tags[c], config.max_len) for c in choices]


def augment_orc(
    corpus: list[negex.AnnotatedSentence],
    extra_orc_count: int,
    config: CorpusConfig,
    lexicon: Lexicon | None = None,
) -> list[negex.AnnotatedSentence]:
    """Append freshly generated object-RC sentences; originals untouched.

    Half of the additions carry the complementizer "that", half do not.
    """
    if extra_orc_count < 0:
        raise ValueError("extra_orc_count must be >= 0")
    if extra_orc_count == 0:
        return list(corpus)
    lex = (lexicon or load_lexicon(config.lexicon_path)).subset(config.lexicon_scope)
    rng = np.random.default_rng([config.seed, 0xA6])
    n_that = extra_orc_count // 2
    extra = [
        _sentence_for_tag(rng, lex, "across-orc", config.max_len)
        for _ in range(n_that)
    ] + [
        _sentence_for_tag(rng, lex, "across-orc-no-that", config.max_len)
        for _ in range(extra_orc_count - n_that)
    ]
    return list(corpus) + extra


def orc_count(corpus: list[negex.AnnotatedSentence]) -> int:
    return sum(1 for s in corpus if s.construction in ORC_TAGS)


def split(
    corpus: list[negex.AnnotatedSentence],
    fractions: tuple[float, float, float],
    seed: int,
) -> tuple[list, list, list]:
    """Disjoint covering train/dev/test split, deterministic under the seed."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {fractions}")
    n = len(corpus)
    order = np.random.default_rng(seed).permutation(n)
    n_train = round(fractions[0] * n)
    n_dev = round(fractions[1] * n)
    train = [corpus[i] for i in order[:n_train]]
    dev = [corpus[i] for i in order[n_train:n_train + n_dev]]
    test = [corpus[i] for i in order[n_train + n_dev:]]
    return train, dev, test


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


@dataclass
class Vocabulary:
    id_to_token: list[str]
    token_to_id: dict[str, int]
    min_freq: int

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def unk_id(self) -> int:
        return 0

    @property
    def bos_id(self) -> int:
        return 1

    @property
    def eos_id(self) -> int:
        return 2

    def encode(self, tokens: list[str]) -> np.ndarray:
        return np.array([self.token_to_id.get(t, 0) for t in tokens], dtype=np.int64)

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[i] for i in ids]


def build_vocab(corpus: list[negex.AnnotatedSentence], min_freq: int = 1) -> Vocabulary:
    """Frequency-thresholded vocabulary, ordered by count desc then token."""
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for s in corpus:
        counts.update(s.tokens)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_freq),
        key=lambda t: (-counts[t], t),
    )
    id_to_token = list(RESERVED) + kept
    return Vocabulary(id_to_token, {t: i for i, t in enumerate(id_to_token)}, min_freq)


def save_vocab(path, vocab: Vocabulary, counts: dict[str, int] | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# min_freq={vocab.min_freq}\n")
        for tok in vocab.id_to_token:
            freq = 0 if counts is None else counts.get(tok, 0)
            f.write(f"{tok}\t{freq}\n")


def load_vocab(path) -> Vocabulary:
    id_to_token = []
    min_freq = 1
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("# min_freq="):
                min_freq = int(line.split("=", 1)[1])
                continue
            if line:
                id_to_token.append(line.split("\t")[0])
    if id_to_token[:3] != list(RESERVED):
        raise ValueError("vocabulary file does not start with the reserved tokens")
    return Vocabulary(id_to_token, {t: i for i, t in enumerate(id_to_token)}, min_freq)


def load_plain_text(path) -> list[negex.AnnotatedSentence]:
    """One sentence per line, whitespace tokens, no annotations."""
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            tokens = line.split()
            if tokens:
                out.append(negex.AnnotatedSentence(tokens, [], "none"))
    return out
