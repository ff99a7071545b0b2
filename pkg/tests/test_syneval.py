import numpy as np
import pytest

from neglm import corpus as cp
from neglm import grammar
from neglm import model as md
from neglm import syneval as se
from neglm.lexicon import load_lexicon

LEX = load_lexicon()
TEST_LEX = LEX.subset("test-only")


def suite_fixture(n=6, seed=0, constructions=se.ROW_ORDER):
    return se.generate_suite(TEST_LEX, constructions, n, seed)


def model_fixture(seed=0, V=None):
    sentences = cp.generate_synthetic(cp.CorpusConfig(num_sentences=300, seed=3))
    vocab = cp.build_vocab(sentences)
    cfg = md.LmConfig(vocab_size=vocab.size, num_layers=1, embed_dim=8, hidden_dim=12,
                      dropout_embed=0.0, dropout_hidden=0.0)
    params = md.init_params(cfg, np.random.default_rng(seed))
    return params, cfg, vocab


# ---------------------------------------------------------------------------
# suite generation
# ---------------------------------------------------------------------------


def test_suite_covers_requested_constructions():
    suite = suite_fixture(n=4)
    by_tag = {}
    for c in suite:
        by_tag.setdefault(c.construction, []).append(c)
    assert set(by_tag) == set(se.ROW_ORDER)
    assert all(len(v) == 4 for v in by_tag.values())


def test_suite_pairs_differ_at_exactly_one_position():
    for c in suite_fixture(n=8, seed=1):
        assert len(c.grammatical) == len(c.ungrammatical)
        diffs = [i for i, (a, b) in enumerate(zip(c.grammatical, c.ungrammatical)) if a != b]
        assert diffs == [c.differing_position]


def test_suite_grammaticality_sides():
    for c in suite_fixture(n=8, seed=2):
        assert grammar.is_grammatical(list(c.grammatical), c.construction, TEST_LEX)
        assert not grammar.is_grammatical(list(c.ungrammatical), c.construction, TEST_LEX)


def test_suite_paper_shaped_examples():
    suite = suite_fixture(n=30, seed=3, constructions=("across-orc", "simple", "npi-simple"))
    orc = next(c for c in suite if c.construction == "across-orc")
    assert orc.grammatical[0] == "the" and orc.grammatical[2] == "that"
    npi = next(c for c in suite if c.construction == "npi-simple")
    assert npi.grammatical[0] == "no" and npi.ungrammatical[0] == "most"
    assert "ever" in npi.grammatical
    simple = next(c for c in suite if c.construction == "simple")
    assert simple.differing_position == 2


def test_suite_unknown_tag_errors():
    with pytest.raises(ValueError, match="unknown construction"):
        se.generate_suite(TEST_LEX, ("bogus",), 2, 0)


def test_suite_deterministic():
    a = suite_fixture(n=5, seed=9)
    b = suite_fixture(n=5, seed=9)
    assert a == b


def test_suite_cases_distinct():
    suite = suite_fixture(n=50, seed=4, constructions=("across-orc",))
    keys = {(c.grammatical, c.ungrammatical) for c in suite}
    assert len(keys) == 50


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


def test_score_pair_matches_brute_force_factorization():
    params, cfg, vocab = model_fixture(seed=5)
    suite = suite_fixture(n=3, seed=5)
    for case in suite:
        got = se.score_pair(params, cfg, vocab, case)

        def brute(tokens):
            ids = vocab.encode(list(tokens))
            dists = np.exp(md.forward(params, cfg, ids))
            targets = list(ids) + [vocab.eos_id]
            p = 1.0
            for t, tgt in enumerate(targets):
                p *= dists[t, tgt]
            return p

        assert got == (brute(case.grammatical) > brute(case.ungrammatical))


def test_uniform_model_ties_score_false():
    params, cfg, vocab = model_fixture()
    for p in params.values():
        p.values = np.zeros_like(p.values)
    suite = suite_fixture(n=2, seed=6)
    report = se.evaluate(params, cfg, vocab, suite)
    assert all(s.correct == 0 for s in report.rows.values())
    assert sum(s.ties for s in report.rows.values()) == len(suite)


def test_evaluate_counts_and_macros():
    params, cfg, vocab = model_fixture(seed=7)
    suite = suite_fixture(n=5, seed=7)
    report = se.evaluate(params, cfg, vocab, suite)
    assert sum(s.n for s in report.rows.values()) == len(suite)
    for name, members in se.CATEGORIES.items():
        accs = [report.rows[m].accuracy for m in members if m in report.rows]
        assert abs(report.macro[name] - np.mean(accs)) < 1e-12


def test_evaluate_order_invariant():
    params, cfg, vocab = model_fixture(seed=8)
    suite = suite_fixture(n=4, seed=8)
    a = se.evaluate(params, cfg, vocab, suite)
    b = se.evaluate(params, cfg, vocab, list(reversed(suite)))
    assert {t: (s.n, s.correct, s.ties) for t, s in a.rows.items()} == {
        t: (s.n, s.correct, s.ties) for t, s in b.rows.items()
    }


def test_evaluate_checkpoint_roundtrip_identical(tmp_path):
    params, cfg, vocab = model_fixture(seed=9)
    suite = suite_fixture(n=4, seed=9)
    before = se.evaluate(params, cfg, vocab, suite)
    path = tmp_path / "m.ckpt"
    md.save_checkpoint(path, cfg, vocab, params)
    cfg2, vocab2, params2 = md.load_checkpoint(path)
    after = se.evaluate(params2, cfg2, vocab2, suite)
    assert before.per_case == after.per_case


def test_evaluate_counts_unks():
    params, cfg, vocab = model_fixture(seed=10)
    case = se.TestCase(("the", "zzzunseen", "laughs", "."), ("the", "zzzunseen", "laugh", "."), "simple", 2)
    report = se.evaluate(params, cfg, vocab, [case])
    assert report.unk_tokens == 2


def test_empty_suite_errors():
    params, cfg, vocab = model_fixture()
    with pytest.raises(ValueError, match="empty"):
        se.evaluate(params, cfg, vocab, [])


def test_subject_animacy_subset():
    suite = suite_fixture(n=40, seed=11, constructions=("across-orc",))
    kinds = {se.subject_is_animate(c, TEST_LEX) for c in suite}
    assert kinds == {True, False}


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def test_suite_file_roundtrip(tmp_path):
    suite = suite_fixture(n=3, seed=12)
    p = tmp_path / "suite.tsv"
    se.write_suite(p, suite)
    back = se.read_suite(p)
    assert back == suite
    se.write_suite(tmp_path / "suite2.tsv", back)
    assert (tmp_path / "suite2.tsv").read_bytes() == p.read_bytes()


def test_report_csv_and_markdown(tmp_path):
    params, cfg, vocab = model_fixture(seed=13)
    suite = suite_fixture(n=3, seed=13)
    report = se.evaluate(params, cfg, vocab, suite)
    p = tmp_path / "report.csv"
    se.write_report_csv(p, report, provenance="abc123")
    text = p.read_text()
    assert text.startswith("# config-hash: abc123\n")
    assert "construction,n,correct,ties,accuracy" in text
    md_text = se.report_markdown(report, perplexity=42.0)
    assert "| Simple |" in md_text
    assert "| Perplexity | | 42.00 |" in md_text
    # rows appear in Table-1 order
    order = [se.DISPLAY_NAMES[t] for t in se.ROW_ORDER]
    positions = [md_text.index(f"| {name} |") for name in order]
    assert positions == sorted(positions)
