from pathlib import Path

import numpy as np
import pytest

from neglm import cli
from neglm import config as cf


def small_config(tmp_path, **kw):
    defaults = dict(
        num_sentences=400,
        corpus_seed=3,
        num_layers=1,
        embed_dim=16,
        hidden_dim=24,
        batch_size=32,
        initial_lr=1.0,
        check_interval=5,
        max_epochs=1,
        seeds="0,1",
        n_per_construction=3,
        data_dir=str(tmp_path / "data"),
        out_dir=str(tmp_path / "out"),
    )
    defaults.update(kw)
    return cf.ExperimentConfig(**defaults)


def write_config(tmp_path, cfg):
    path = tmp_path / "exp.cfg"
    cfg.write(path)
    return str(path)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cliws")
    cfg = small_config(tmp)
    assert cli.main(["gen-corpus", "--config", write_config(tmp, cfg)]) == 0
    return tmp, cfg


# ---------------------------------------------------------------------------
# config file handling
# ---------------------------------------------------------------------------


def test_config_roundtrip(tmp_path):
    cfg = small_config(tmp_path, loss_kind="token-margin", delta=5.0, tie_embeddings=False)
    path = write_config(tmp_path, cfg)
    back = cf.load_config(path)
    assert back == cfg


def test_config_comments_and_spacing(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# a comment\nnum_sentences = 123   # trailing comment\n\nloss_kind=binary\n")
    cfg = cf.load_config(p)
    assert cfg.num_sentences == 123
    assert cfg.loss_kind == "binary"


def test_config_unknown_key_rejected(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("not_a_key = 1\n")
    with pytest.raises(cf.ConfigError, match="unknown key"):
        cf.load_config(p)


def test_config_bad_value_rejected(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("num_sentences = many\n")
    with pytest.raises(cf.ConfigError, match="bad value"):
        cf.load_config(p)


def test_config_mix_and_seeds():
    cfg = cf.ExperimentConfig()
    mix = cfg.mix()
    assert abs(sum(mix.values()) - 1.0) < 1e-9
    assert "across-orc-no-that" in mix
    assert cfg.seed_list == [0, 1, 2, 3, 4]


# ---------------------------------------------------------------------------
# gen-corpus / gen-suite
# ---------------------------------------------------------------------------


def test_gen_corpus_outputs(workspace):
    tmp, cfg = workspace
    data = Path(cfg.data_dir)
    for name in ("train.tsv", "dev.tsv", "test.tsv", "vocab.tsv", "config.resolved"):
        assert (data / name).exists()
    n_train = len((data / "train.tsv").read_text().splitlines())
    n_dev = len((data / "dev.tsv").read_text().splitlines())
    n_test = len((data / "test.tsv").read_text().splitlines())
    assert (n_train, n_dev, n_test) == (320, 40, 40)  # 8:1:1 of 400


def test_gen_corpus_byte_deterministic(tmp_path):
    cfg1 = small_config(tmp_path, data_dir=str(tmp_path / "d1"))
    cfg2 = small_config(tmp_path, data_dir=str(tmp_path / "d2"))
    assert cli.main(["gen-corpus", "--config", write_config(tmp_path / "a", cfg1) if False else write_config(tmp_path, cfg1)]) == 0
    assert cli.main(["gen-corpus", "--config", write_config(tmp_path, cfg2)]) == 0
    a = (Path(cfg1.data_dir) / "train.tsv").read_bytes()
    b = (Path(cfg2.data_dir) / "train.tsv").read_bytes()
    assert a == b


def test_gen_suite(tmp_path):
    cfg = small_config(tmp_path)
    assert cli.main(["gen-suite", "--config", write_config(tmp_path, cfg)]) == 0
    suite = (Path(cfg.out_dir) / "suite.tsv").read_text().splitlines()
    assert len(suite) == 3 * 15


# ---------------------------------------------------------------------------
# train / eval
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained(workspace, tmp_path_factory):
    tmp, cfg = workspace
    run_dir = tmp_path_factory.mktemp("run")
    cfg = cfg.replace(out_dir=str(run_dir / "baseline"))
    assert cli.main(["train", "--config", write_config(run_dir, cfg)]) == 0
    return tmp, cfg


def test_train_outputs(trained):
    _, cfg = trained
    out = Path(cfg.out_dir)
    for seed in (0, 1):
        d = out / f"seed_{seed}"
        assert (d / "model.ckpt").exists()
        assert (d / "trainlog.csv").exists()
        assert (d / "config.resolved").exists()
    assert (out / "config.resolved").exists()


def test_train_deterministic_logs(trained, tmp_path):
    tmp, cfg = trained
    rerun = cfg.replace(out_dir=str(tmp_path / "rerun"))
    assert cli.main(["train", "--config", write_config(tmp_path, rerun)]) == 0
    for seed in (0, 1):
        a = (Path(cfg.out_dir) / f"seed_{seed}" / "trainlog.csv").read_bytes()
        b = (Path(rerun.out_dir) / f"seed_{seed}" / "trainlog.csv").read_bytes()
        assert a == b


def test_eval_summary(trained, tmp_path):
    tmp, cfg = trained
    ckpts = [str(Path(cfg.out_dir) / f"seed_{s}" / "model.ckpt") for s in (0, 1)]
    eval_cfg = cfg.replace(out_dir=str(tmp_path / "eval"))
    assert cli.main(["eval", "--config", write_config(tmp_path, eval_cfg)] + ckpts) == 0
    out = Path(eval_cfg.out_dir)
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("# config-hash: ")
    assert summary[1] == "construction,n,mean_accuracy,sd_accuracy"
    assert any(line.startswith("perplexity,") for line in summary)
    assert (out / "summary.md").read_text().count("|") > 10
    # means recomputable from the per-seed reports
    per_seed = []
    for i in (0, 1):
        lines = (out / f"report_{i}.csv").read_text().splitlines()
        row = next(line for line in lines if line.startswith("simple,"))
        per_seed.append(float(row.split(",")[4]))
    simple_row = next(line for line in summary if line.startswith("simple,"))
    mean = float(simple_row.split(",")[2])
    assert abs(mean - np.mean(per_seed)) < 1e-12


def test_eval_single_checkpoint_sd_zero(trained, tmp_path):
    tmp, cfg = trained
    ckpt = str(Path(cfg.out_dir) / "seed_0" / "model.ckpt")
    eval_cfg = cfg.replace(out_dir=str(tmp_path / "eval1"))
    assert cli.main(["eval", "--config", write_config(tmp_path, eval_cfg), ckpt]) == 0
    summary = (Path(eval_cfg.out_dir) / "summary.csv").read_text().splitlines()
    for line in summary[2:]:
        assert line.rsplit(",", 1)[1] in ("0.0", "")


def test_eval_vocab_mismatch_exits_1(trained, tmp_path):
    tmp, cfg = trained
    other = small_config(tmp_path, num_sentences=300, corpus_seed=99,
                         data_dir=str(tmp_path / "otherdata"))
    assert cli.main(["gen-corpus", "--config", write_config(tmp_path, other)]) == 0
    ckpt = str(Path(cfg.out_dir) / "seed_0" / "model.ckpt")
    eval_cfg = other.replace(out_dir=str(tmp_path / "evalbad"))
    assert cli.main(["eval", "--config", write_config(tmp_path, eval_cfg), ckpt]) == 1


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def test_sweep_margin(workspace, tmp_path):
    tmp, cfg = workspace
    sweep_cfg = cfg.replace(out_dir=str(tmp_path / "sweep"), seeds="0,1")
    assert cli.main(["sweep-margin", "--config", write_config(tmp_path, sweep_cfg), "--deltas", "0,1"]) == 0
    lines = (Path(sweep_cfg.out_dir) / "sweep.csv").read_text().splitlines()
    rows = [line.split(",") for line in lines[2:]]
    assert len(rows) == 4  # 2 kinds x 2 deltas
    zero_rows = [r for r in rows if float(r[1]) == 0.0]
    assert zero_rows[0][2:] == zero_rows[1][2:]  # delta=0 is the shared baseline
    assert not (Path(sweep_cfg.out_dir) / "sweep_check.csv").exists()  # single positive delta


def test_augment_orc(workspace, tmp_path):
    tmp, cfg = workspace
    aug_cfg = cfg.replace(out_dir=str(tmp_path / "aug"), seeds="0")
    assert cli.main(["augment-orc", "--config", write_config(tmp_path, aug_cfg), "--multipliers", "1,2"]) == 0
    lines = (Path(aug_cfg.out_dir) / "augment.csv").read_text().splitlines()
    rows = [line.split(",") for line in lines[2:]]
    assert len(rows) == 2
    base_count = int(rows[0][1])
    assert int(rows[1][1]) == 2 * base_count
    assert (Path(aug_cfg.out_dir) / "aug_x2" / "train.tsv").exists()


def test_ablate_token(workspace, tmp_path):
    tmp, cfg = workspace
    ab_cfg = cfg.replace(out_dir=str(tmp_path / "abl"), seeds="0")
    assert cli.main(["ablate", "--config", write_config(tmp_path, ab_cfg), "--mode", "token"]) == 0
    out = Path(ab_cfg.out_dir)
    lines = (out / "ablate.csv").read_text().splitlines()
    tags = [line.split(",")[0] for line in lines[2:]]
    assert tags == ["across-pp", "across-src", "across-orc", "long-vp"]
    assert (out / "ablate_longvp_breakdown.csv").exists()


def test_ablate_pattern(workspace, tmp_path):
    tmp, cfg = workspace
    ab_cfg = cfg.replace(out_dir=str(tmp_path / "ablp"), seeds="0")
    assert cli.main(["ablate", "--config", write_config(tmp_path, ab_cfg),
                     "--mode", "pattern", "--target", "across-src"]) == 0
    lines = (Path(ab_cfg.out_dir) / "ablate.csv").read_text().splitlines()
    tags = [line.split(",")[0] for line in lines[2:]]
    assert tags == ["across-src"]


def test_ablate_pattern_requires_valid_target(workspace, tmp_path):
    tmp, cfg = workspace
    ab_cfg = cfg.replace(out_dir=str(tmp_path / "ablbad"))
    code = cli.main(["ablate", "--config", write_config(tmp_path, ab_cfg), "--mode", "pattern", "--target", "simple"])
    assert code == 1


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------


def test_unknown_command_exits_1():
    assert cli.main(["frobnicate"]) == 1


def test_missing_corpus_exits_1(tmp_path):
    cfg = small_config(tmp_path, data_dir=str(tmp_path / "nowhere"))
    assert cli.main(["train", "--config", write_config(tmp_path, cfg)]) == 1


def test_seed_override(workspace, tmp_path):
    tmp, cfg = workspace
    run_cfg = cfg.replace(out_dir=str(tmp_path / "single"))
    assert cli.main(["train", "--config", write_config(tmp_path, run_cfg), "--seed", "7"]) == 0
    assert (Path(run_cfg.out_dir) / "seed_7" / "model.ckpt").exists()
    assert not (Path(run_cfg.out_dir) / "seed_0").exists()
