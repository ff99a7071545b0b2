from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neglm import corpus as cp
from neglm import grammar, negex
from neglm.lexicon import PLURAL, SINGULAR, load_lexicon

LEX = load_lexicon()


def small_config(n=200, seed=0, **kw):
    return cp.CorpusConfig(num_sentences=n, seed=seed, **kw)


# ---------------------------------------------------------------------------
# grammar templates
# ---------------------------------------------------------------------------


def test_every_corpus_construction_generates_and_checks():
    rng = np.random.default_rng(1)
    for tag in negex.CORPUS_CONSTRUCTIONS:
        for _ in range(50):
            draft = grammar.build_sentence(rng, LEX, tag)
            assert grammar.is_grammatical(draft.tokens, tag, LEX), (tag, draft.tokens)
            assert len(draft.tokens) <= 20


def test_every_suite_construction_pair_checks():
    rng = np.random.default_rng(2)
    test_lex = LEX.subset("test-only")
    for tag in negex.SUITE_CONSTRUCTIONS:
        for _ in range(50):
            draft = grammar.build_sentence(rng, test_lex, tag, suite=True)
            bad = grammar.ungrammatical_twin(rng, test_lex, draft)
            assert grammar.is_grammatical(draft.tokens, tag, test_lex), (tag, draft.tokens)
            assert not grammar.is_grammatical(bad, tag, test_lex), (tag, bad)
            assert len(bad) == len(draft.tokens)
            diffs = [i for i, (a, b) in enumerate(zip(draft.tokens, bad)) if a != b]
            assert diffs == [draft.critical]


def test_unknown_construction_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="unknown construction"):
        grammar.build_sentence(rng, LEX, "nope")


def test_themselves_sentences_have_plural_subject():
    rng = np.random.default_rng(3)
    for _ in range(200):
        draft = grammar.build_sentence(rng, LEX, "reflexive")
        if "themselves" in draft.tokens:
            # the binding subject is the closest noun before the reflexive
            pos = draft.tokens.index("themselves")
            binder = next(
                LEX.noun_info(t)
                for t in reversed(draft.tokens[:pos])
                if LEX.noun_info(t) is not None
            )
            assert binder[1] == PLURAL


# ---------------------------------------------------------------------------
# generate_synthetic
# ---------------------------------------------------------------------------


def test_generate_single_template_mix():
    cfg = small_config(n=3, mix={"simple": 1.0})
    out = cp.generate_synthetic(cfg)
    assert len(out) == 3
    for s in out:
        assert s.construction == "simple"
        assert s.tokens[0] == "the" and s.tokens[-1] == "."
        assert grammar.is_grammatical(s.tokens, "simple", LEX)


def test_generate_tag_distribution_within_bounds():
    mix = {"simple": 0.9, "across-orc": 0.1}
    cfg = cp.CorpusConfig(num_sentences=10_000, mix=mix, seed=7)
    out = cp.generate_synthetic(cfg)
    orc = sum(1 for s in out if s.construction == "across-orc")
    assert 800 <= orc <= 1200


def test_generate_all_sentences_grammatical_and_annotated():
    cfg = small_config(n=400, seed=11)
    out = cp.generate_synthetic(cfg)
    for s in out:
        assert grammar.is_grammatical(s.tokens, s.construction, LEX)
        for t in s.targets:
            assert s.tokens[t.position] not in t.negatives
    # every non-NPI construction should carry at least one target somewhere
    tags_with_targets = {s.construction for s in out if s.targets}
    assert "simple" in tags_with_targets and "across-orc" not in tags_with_targets - tags_with_targets


def test_generate_deterministic():
    a = cp.generate_synthetic(small_config(n=50, seed=5))
    b = cp.generate_synthetic(small_config(n=50, seed=5))
    assert [s.tokens for s in a] == [s.tokens for s in b]
    assert [s.targets for s in a] == [s.targets for s in b]


def test_generate_rejects_bad_mix():
    with pytest.raises(ValueError, match="sum to 1"):
        cp.generate_synthetic(small_config(n=5, mix={"simple": 0.5}))
    with pytest.raises(ValueError, match="unknown corpus construction"):
        cp.generate_synthetic(small_config(n=5, mix={"refl-simple": 1.0}))


def test_train_only_scope_excludes_test_content_words():
    cfg = small_config(n=300, seed=9, lexicon_scope="train-only")
    out = cp.generate_synthetic(cfg)
    test_nouns = {w.singular for w in LEX.nouns if w.test} | {w.plural for w in LEX.nouns if w.test}
    for s in out:
        assert not (set(s.tokens) & test_nouns), s.tokens


# ---------------------------------------------------------------------------
# augment / split
# ---------------------------------------------------------------------------


def test_augment_zero_identity():
    base = cp.generate_synthetic(small_config(n=50, seed=1))
    out = cp.augment_orc(base, 0, small_config(n=50, seed=1))
    assert [s.tokens for s in out] == [s.tokens for s in base]


def test_augment_appends_exact_count():
    cfg = small_config(n=100, seed=2)
    base = cp.generate_synthetic(cfg)
    before = cp.orc_count(base)
    out = cp.augment_orc(base, 1000, cfg)
    assert len(out) == len(base) + 1000
    assert cp.orc_count(out) == before + 1000
    assert [s.tokens for s in out[: len(base)]] == [s.tokens for s in base]
    that = sum(1 for s in out[len(base):] if s.construction == "across-orc")
    assert that == 500
    for s in out[len(base):]:
        assert grammar.is_grammatical(s.tokens, s.construction, LEX)


def test_augment_eight_times_recipe():
    cfg = cp.CorpusConfig(num_sentences=2000, seed=3)
    base = cp.generate_synthetic(cfg)
    n = cp.orc_count(base)
    out = cp.augment_orc(base, 7 * n, cfg)
    assert cp.orc_count(out) == 8 * n


def test_split_sizes_and_partition():
    base = cp.generate_synthetic(small_config(n=1000, seed=4))
    train, dev, test = cp.split(base, (0.8, 0.1, 0.1), seed=0)
    assert (len(train), len(dev), len(test)) == (800, 100, 100)
    key = lambda s: (tuple(s.tokens), s.construction)
    assert Counter(map(key, train + dev + test)) == Counter(map(key, base))


def test_split_deterministic():
    base = cp.generate_synthetic(small_config(n=100, seed=4))
    a = cp.split(base, (0.8, 0.1, 0.1), seed=42)
    b = cp.split(base, (0.8, 0.1, 0.1), seed=42)
    assert [[s.tokens for s in part] for part in a] == [[s.tokens for s in part] for part in b]


def test_split_bad_fractions():
    with pytest.raises(ValueError, match="fractions"):
        cp.split([negex.AnnotatedSentence(["a"], [], "none")], (0.5, 0.2, 0.2), seed=0)


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


def test_vocab_min_freq_one_includes_everything():
    base = cp.generate_synthetic(small_config(n=100, seed=6))
    vocab = cp.build_vocab(base, min_freq=1)
    seen = {t for s in base for t in s.tokens}
    assert seen <= set(vocab.id_to_token)
    assert vocab.id_to_token[:3] == ["<unk>", "<bos>", "<eos>"]


def test_vocab_threshold_boundary():
    sents = [negex.AnnotatedSentence(["a", "a", "b"], [], "none")]
    vocab = cp.build_vocab(sents, min_freq=2)
    assert "a" in vocab.token_to_id and "b" not in vocab.token_to_id
    assert vocab.encode(["b"]).tolist() == [vocab.unk_id]


def test_vocab_order_independent_of_sentence_order():
    base = cp.generate_synthetic(small_config(n=200, seed=8))
    v1 = cp.build_vocab(base)
    v2 = cp.build_vocab(list(reversed(base)))
    assert v1.id_to_token == v2.id_to_token


def test_vocab_roundtrip(tmp_path):
    base = cp.generate_synthetic(small_config(n=50, seed=9))
    vocab = cp.build_vocab(base)
    counts = Counter(t for s in base for t in s.tokens)
    p = tmp_path / "vocab.tsv"
    cp.save_vocab(p, vocab, counts)
    back = cp.load_vocab(p)
    assert back.id_to_token == vocab.id_to_token
    assert back.min_freq == vocab.min_freq


def test_desk_scale_vocab_size():
    base = cp.generate_synthetic(small_config(n=20_000, seed=10))
    vocab = cp.build_vocab(base)
    assert 150 <= vocab.size <= 260


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_split_union_property(seed):
    base = cp.generate_synthetic(small_config(n=37, seed=12))
    train, dev, test = cp.split(base, (0.6, 0.2, 0.2), seed=seed)
    assert len(train) + len(dev) + len(test) == len(base)


def test_plain_text_loader(tmp_path):
    p = tmp_path / "raw.txt"
    p.write_text("the author laughs .\nthe guards smile .\n", encoding="utf-8")
    out = cp.load_plain_text(p)
    assert len(out) == 2
    assert out[0].tokens == ["the", "author", "laughs", "."]
    assert out[0].targets == [] and out[0].construction == "none"
