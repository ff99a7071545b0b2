"""Command-line experiment drivers.

Subcommands map one-to-one onto the toolkit's experiments:

  gen-corpus    synthetic annotated train/dev/test corpora + vocabulary
  gen-suite     minimal-pair evaluation suite
  train         one training run per seed, checkpoints + train logs
  eval          score checkpoints on the suite, mean +/- sd summary
  sweep-margin  margin-value sweep for both margin losses
  augment-orc   object-RC augmentation sweep
  ablate        token-level or construction-level negative-example ablation

Every run writes its fully resolved config beside its outputs; every CSV
carries a config-hash comment line.  Exit codes: 0 success, 1 validation
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from neglm import corpus as cp
from neglm import model as md
from neglm import negex
from neglm import syneval as se
from neglm import trainer as tr
from neglm.config import ConfigError, ExperimentConfig, load_config
from neglm.lexicon import load_lexicon

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

_BLAS_LIMITER = None

NONLOCAL_CONSTRUCTIONS = ("across-pp", "across-src", "across-orc", "long-vp")


def _limit_blas() -> None:
    # single-threaded BLAS: these matrices are too small for threading to
    # pay off, and parallelism comes from per-seed worker processes
    global _BLAS_LIMITER
    if threadpool_limits is not None and _BLAS_LIMITER is None:
        _BLAS_LIMITER = threadpool_limits(limits=1)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _write_csv(path, header: list[str], rows: list[list], provenance: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# config-hash: {provenance}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(str(x) for x in row) + "\n")


def _mean_sd(values) -> tuple[float, float]:
    arr = np.asarray(list(values), dtype=np.float64)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def _data_paths(cfg: ExperimentConfig) -> dict[str, Path]:
    root = Path(cfg.data_dir)
    paths = {name: root / f"{name}.tsv" for name in ("train", "dev", "test", "vocab")}
    missing = [str(p) for p in paths.values() if not p.exists()]
    if missing:
        raise ConfigError(f"corpus files missing (run gen-corpus first): {', '.join(missing)}")
    return paths


def _suite_path(cfg: ExperimentConfig, out_root: Path) -> Path:
    """The evaluation suite for this config, generated once and reused."""
    path = out_root / "suite.tsv"
    if not path.exists():
        lex = load_lexicon(cfg.lexicon_file or None).subset("test-only")
        suite = se.generate_suite(lex, cfg.constructions(), cfg.n_per_construction, cfg.suite_seed)
        se.write_suite(path, suite)
    return path


# ---------------------------------------------------------------------------
# the per-seed worker (runs in a subprocess when --threads > 1)
# ---------------------------------------------------------------------------


def run_seed_job(payload: dict) -> dict:
    """Train one seed, save its artifacts, and optionally evaluate it."""
    _limit_blas()
    cfg = ExperimentConfig(**payload["config"])
    seed = payload["seed"]
    out_dir = Path(payload["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    train_corpus = negex.read_corpus(payload["train_path"])
    dev_corpus = negex.read_corpus(payload["dev_path"])
    vocab = cp.load_vocab(payload["vocab_path"])
    if payload.get("filter_lemmas"):
        train_corpus = negex.filter_targets_by_lemma(train_corpus, set(payload["filter_lemmas"]))
    for tag in payload.get("filter_constructions", ()):
        train_corpus = negex.filter_targets_by_construction(train_corpus, tag)

    model_cfg = cfg.lm_config(vocab.size)
    params = md.init_params(model_cfg, np.random.default_rng(seed))
    result = tr.train(params, model_cfg, vocab, train_corpus, dev_corpus,
                      cfg.loss_config(), cfg.train_config(seed))

    md.save_checkpoint(out_dir / "model.ckpt", model_cfg, vocab, result.params)
    tr.write_trainlog(out_dir / "trainlog.csv", result.log)
    cfg.write(out_dir / "config.resolved")

    metrics = {"seed": seed, "best_dev_ppl": min(r.dev_ppl for r in result.log.records)}
    if payload.get("evaluate"):
        suite = se.read_suite(payload["suite_path"])
        report = se.evaluate(result.params, model_cfg, vocab, suite)
        test_ids = [vocab.encode(s.tokens) for s in negex.read_corpus(payload["test_path"])]
        se.write_report_csv(out_dir / "report.csv", report, cfg.hash())
        metrics.update(
            rows={t: (s.n, s.correct, s.ties) for t, s in report.rows.items()},
            macro=dict(report.macro),
            test_ppl=tr.perplexity(result.params, model_cfg, test_ids),
            per_case=[(bool(c), bool(t)) for c, t in report.per_case],
            unk=report.unk_tokens,
        )
    return metrics


def eval_ckpt_job(payload: dict) -> dict:
    _limit_blas()
    ckpt = payload["checkpoint"]
    model_cfg, vocab, params = md.load_checkpoint(ckpt)
    suite = se.read_suite(payload["suite_path"])
    report = se.evaluate(params, model_cfg, vocab, suite)
    test_ids = [vocab.encode(s.tokens) for s in negex.read_corpus(payload["test_path"])]
    if payload.get("report_path"):
        se.write_report_csv(payload["report_path"], report, payload.get("provenance", ""))
    return {
        "checkpoint": str(ckpt),
        "rows": {t: (s.n, s.correct, s.ties) for t, s in report.rows.items()},
        "macro": dict(report.macro),
        "test_ppl": tr.perplexity(params, model_cfg, test_ids),
        "per_case": [(bool(c), bool(t)) for c, t in report.per_case],
        "unk": report.unk_tokens,
    }


def _run_jobs(worker, payloads: list[dict], threads: int) -> list[dict]:
    if threads <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with get_context("spawn").Pool(min(threads, len(payloads))) as pool:
        return pool.map(worker, payloads)


def _train_payloads(cfg: ExperimentConfig, paths, suite_path, out_root: Path,
                    evaluate: bool, **extra) -> list[dict]:
    return [
        {
            "config": asdict(cfg),
            "seed": seed,
            "out_dir": str(out_root / f"seed_{seed}"),
            "train_path": str(extra.get("train_path", paths["train"])),
            "dev_path": str(paths["dev"]),
            "test_path": str(paths["test"]),
            "vocab_path": str(paths["vocab"]),
            "suite_path": str(suite_path) if suite_path else None,
            "evaluate": evaluate,
            "filter_lemmas": extra.get("filter_lemmas"),
            "filter_constructions": extra.get("filter_constructions", ()),
        }
        for seed in cfg.seed_list
    ]


def _accuracy(metrics: dict, tag: str) -> float:
    n, correct, _ = metrics["rows"][tag]
    return correct / n


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_corpus(cfg: ExperimentConfig) -> None:
    root = Path(cfg.data_dir)
    root.mkdir(parents=True, exist_ok=True)
    lex = load_lexicon(cfg.lexicon_file or None)
    full = cp.generate_synthetic(cfg.corpus_config(), lex)
    train, dev, test = cp.split(full, (cfg.train_frac, cfg.dev_frac, cfg.test_frac), cfg.corpus_seed)
    vocab = cp.build_vocab(train, cfg.min_freq)
    counts = {}
    for s in train:
        for t in s.tokens:
            counts[t] = counts.get(t, 0) + 1
    negex.write_corpus(root / "train.tsv", train)
    negex.write_corpus(root / "dev.tsv", dev)
    negex.write_corpus(root / "test.tsv", test)
    cp.save_vocab(root / "vocab.tsv", vocab, counts)
    cfg.write(root / "config.resolved")
    print(f"gen-corpus: {len(train)}/{len(dev)}/{len(test)} sentences, "
          f"vocab {vocab.size}, ORC share {cp.orc_count(full) / len(full):.3%} -> {root}")


def cmd_gen_suite(cfg: ExperimentConfig) -> None:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lex = load_lexicon(cfg.lexicon_file or None).subset("test-only")
    suite = se.generate_suite(lex, cfg.constructions(), cfg.n_per_construction, cfg.suite_seed)
    se.write_suite(out / "suite.tsv", suite)
    cfg.write(out / "config.resolved")
    print(f"gen-suite: {len(suite)} cases over {len(cfg.constructions())} constructions -> {out / 'suite.tsv'}")


def cmd_train(cfg: ExperimentConfig) -> None:
    paths = _data_paths(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.resolved")
    payloads = _train_payloads(cfg, paths, None, out, evaluate=False)
    results = _run_jobs(run_seed_job, payloads, cfg.threads)
    for r in results:
        print(f"train: seed {r['seed']} best dev ppl {r['best_dev_ppl']:.3f}")


def cmd_eval(cfg: ExperimentConfig, checkpoints: list[str], suite_file: str | None) -> None:
    paths = _data_paths(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.resolved")
    suite_path = Path(suite_file) if suite_file else _suite_path(cfg, out)
    data_vocab = cp.load_vocab(paths["vocab"])
    for ckpt in checkpoints:
        if not Path(ckpt).exists():
            raise ConfigError(f"checkpoint not found: {ckpt}")
        _, ckpt_vocab, _ = md.load_checkpoint(ckpt)
        if ckpt_vocab.id_to_token != data_vocab.id_to_token:
            raise ConfigError(f"vocabulary mismatch between {ckpt} and {paths['vocab']}")
    payloads = [
        {
            "checkpoint": c,
            "suite_path": str(suite_path),
            "test_path": str(paths["test"]),
            "report_path": str(out / f"report_{i}.csv"),
            "provenance": cfg.hash(),
        }
        for i, c in enumerate(checkpoints)
    ]
    results = _run_jobs(eval_ckpt_job, payloads, cfg.threads)

    header = ["construction", "n", "mean_accuracy", "sd_accuracy"]
    rows = []
    present = [t for t in se.ROW_ORDER if all(t in r["rows"] for r in results)]
    for tag in present:
        mean, sd = _mean_sd(_accuracy(r, tag) for r in results)
        rows.append([tag, results[0]["rows"][tag][0], repr(mean), repr(sd)])
    for name in se.CATEGORIES:
        if all(name in r["macro"] for r in results):
            mean, sd = _mean_sd(r["macro"][name] for r in results)
            rows.append([f"macro-{name.lower()}", "", repr(mean), repr(sd)])
    ppl_mean, ppl_sd = _mean_sd(r["test_ppl"] for r in results)
    rows.append(["perplexity", "", repr(ppl_mean), repr(ppl_sd)])
    _write_csv(out / "summary.csv", header, rows, cfg.hash())

    lines = ["| Construction | Mean | SD |", "|---|---|---|"]
    for tag in present:
        mean, sd = _mean_sd(_accuracy(r, tag) for r in results)
        lines.append(f"| {se.DISPLAY_NAMES[tag]} | {100 * mean:.1f} | {100 * sd:.1f} |")
    for name in se.CATEGORIES:
        mean, sd = _mean_sd(r["macro"][name] for r in results)
        lines.append(f"| Macro: {name} | {100 * mean:.1f} | {100 * sd:.1f} |")
    lines.append(f"| Perplexity (test) | {ppl_mean:.2f} | {ppl_sd:.2f} |")
    (out / "summary.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"eval: {len(results)} checkpoints -> {out / 'summary.csv'}")


def cmd_sweep_margin(cfg: ExperimentConfig, deltas: list[float]) -> None:
    if not deltas:
        raise ConfigError("sweep-margin needs at least one delta")
    paths = _data_paths(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.resolved")
    suite_path = _suite_path(cfg, out)

    settings: list[tuple[str, float]] = []
    if any(d == 0 for d in deltas):
        settings.append(("none", 0.0))
    for kind in ("sentence-margin", "token-margin"):
        settings.extend((kind, d) for d in sorted(deltas) if d > 0)

    payloads = []
    for kind, delta in settings:
        sub = cfg.replace(loss_kind=kind, delta=delta, out_dir=str(out / f"{kind}_d{delta:g}"))
        payloads.extend(_train_payloads(sub, paths, suite_path, Path(sub.out_dir), evaluate=True))
    results = _run_jobs(run_seed_job, payloads, cfg.threads)

    by_setting: dict[tuple[str, float], list[dict]] = {}
    i = 0
    for kind, delta in settings:
        by_setting[(kind, delta)] = results[i:i + len(cfg.seed_list)]
        i += len(cfg.seed_list)

    header = ["kind", "delta", "agreement_mean", "agreement_sd", "reflexive_mean",
              "reflexive_sd", "npi_mean", "npi_sd", "ppl_mean", "ppl_sd"]
    rows = []
    for kind in ("sentence-margin", "token-margin"):
        for d in sorted(deltas):
            source = ("none", 0.0) if d == 0 else (kind, d)
            if source not in by_setting:
                continue
            group = by_setting[source]
            row = [kind, d]
            for cat in ("Agreement", "Reflexive", "NPI"):
                mean, sd = _mean_sd(g["macro"][cat] for g in group)
                row += [repr(mean), repr(sd)]
            mean, sd = _mean_sd(g["test_ppl"] for g in group)
            row += [repr(mean), repr(sd)]
            rows.append(row)
    _write_csv(out / "sweep.csv", header, rows, cfg.hash())

    positive = sorted(d for d in deltas if d > 0)
    if len(positive) >= 2:
        lo_d, hi_d = positive[0], positive[-1]
        check_rows = []
        for kind in ("sentence-margin", "token-margin"):
            hi, _ = _mean_sd(g["macro"]["Agreement"] for g in by_setting[(kind, hi_d)])
            lo, _ = _mean_sd(g["macro"]["Agreement"] for g in by_setting[(kind, lo_d)])
            check_rows.append([kind, hi_d, lo_d, repr(hi), repr(lo), repr(hi - lo)])
        _write_csv(out / "sweep_check.csv",
                   ["kind", "delta_hi", "delta_lo", "agreement_hi", "agreement_lo", "difference"],
                   check_rows, cfg.hash())
    print(f"sweep-margin: {len(rows)} rows -> {out / 'sweep.csv'}")


def _subset_accuracy(suite, results, tag: str, predicate) -> list[float]:
    """Per-seed accuracy over the suite cases of `tag` satisfying `predicate`."""
    idx = [i for i, c in enumerate(suite) if c.construction == tag and predicate(c)]
    out = []
    for r in results:
        correct = sum(1 for i in idx if r["per_case"][i][0])
        out.append(correct / len(idx) if idx else 0.0)
    return out


def cmd_augment_orc(cfg: ExperimentConfig, multipliers: list[int]) -> None:
    if not multipliers or any(m < 1 for m in multipliers):
        raise ConfigError("augment-orc multipliers must be integers >= 1")
    paths = _data_paths(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.resolved")
    suite_path = _suite_path(cfg, out)
    suite = se.read_suite(suite_path)
    lex = load_lexicon(cfg.lexicon_file or None)

    base_train = negex.read_corpus(paths["train"])
    base_orc = cp.orc_count(base_train)
    payload_groups: list[tuple[int, int, list[dict]]] = []
    for m in sorted(set(multipliers)):
        sub_out = out / f"aug_x{m}"
        sub_out.mkdir(parents=True, exist_ok=True)
        train_path = paths["train"]
        if m > 1:
            augmented = cp.augment_orc(base_train, (m - 1) * base_orc, cfg.corpus_config(), lex)
            train_path = sub_out / "train.tsv"
            negex.write_corpus(train_path, augmented)
        sub = cfg.replace(out_dir=str(sub_out))
        group = _train_payloads(sub, paths, suite_path, sub_out, evaluate=True, train_path=train_path)
        payload_groups.append((m, m * base_orc, group))

    flat = [p for _, _, group in payload_groups for p in group]
    results = _run_jobs(run_seed_job, flat, cfg.threads)

    header = ["multiplier", "orc_train_count",
              "across_orc_mean", "across_orc_sd",
              "across_orc_no_that_mean", "across_orc_no_that_sd",
              "across_orc_animate_mean", "across_orc_animate_sd",
              "across_orc_no_that_animate_mean", "across_orc_no_that_animate_sd",
              "across_src_mean", "across_src_sd"]
    rows = []
    i = 0
    animate = lambda c: se.subject_is_animate(c, lex)
    for m, count, group in payload_groups:
        res = results[i:i + len(group)]
        i += len(group)
        row = [m, count]
        for tag in ("across-orc", "across-orc-no-that"):
            mean, sd = _mean_sd(_accuracy(r, tag) for r in res)
            row += [repr(mean), repr(sd)]
        for tag in ("across-orc", "across-orc-no-that"):
            mean, sd = _mean_sd(_subset_accuracy(suite, res, tag, animate))
            row += [repr(mean), repr(sd)]
        mean, sd = _mean_sd(_accuracy(r, "across-src") for r in res)
        row += [repr(mean), repr(sd)]
        rows.append(row)
    _write_csv(out / "augment.csv", header, rows, cfg.hash())
    print(f"augment-orc: multipliers {sorted(set(multipliers))} -> {out / 'augment.csv'}")


def cmd_ablate(cfg: ExperimentConfig, mode: str, target: str | None) -> None:
    paths = _data_paths(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.resolved")
    suite_path = _suite_path(cfg, out)
    suite = se.read_suite(suite_path)
    lex = load_lexicon(cfg.lexicon_file or None)

    if mode == "token":
        excluded = sorted({w.lemma for w in lex.all_verbs() if w.test})
        extra = {"filter_lemmas": excluded}
        eval_tags = list(NONLOCAL_CONSTRUCTIONS)
        note = f"token ablation of {len(excluded)} test verbs"
    elif mode == "pattern":
        if target not in NONLOCAL_CONSTRUCTIONS:
            raise ConfigError(f"--target must be one of {NONLOCAL_CONSTRUCTIONS}, got {target!r}")
        filters = [target] + (["across-orc-no-that"] if target == "across-orc" else [])
        extra = {"filter_constructions": filters}
        eval_tags = [target] + (["across-orc-no-that"] if target == "across-orc" else [])
        note = "pattern ablation; larger degradation expected on ORC" if target == "across-orc" \
            else "pattern ablation"
    else:
        raise ConfigError(f"unknown ablation mode {mode!r}")

    payloads = _train_payloads(cfg, paths, suite_path, out, evaluate=True, **extra)
    results = _run_jobs(run_seed_job, payloads, cfg.threads)

    rows = []
    for tag in eval_tags:
        mean, sd = _mean_sd(_accuracy(r, tag) for r in results)
        rows.append([tag, repr(mean), repr(sd), results[0]["rows"][tag][0], note])
    _write_csv(out / "ablate.csv", ["construction", "mean", "sd", "n", "note"], rows, cfg.hash())

    if "long-vp" in eval_tags:
        verb_of = lambda c: c.grammatical[c.differing_position]
        lemma_of = lambda c: lex.verb_info(verb_of(c))[0].lemma
        first_verb = lambda c: next(t for t in c.grammatical if lex.verb_info(t) is not None)
        is_like = lambda c: lemma_of(c) == "like"
        v1_likes = lambda c: lex.verb_info(first_verb(c))[0].lemma == "like" and not is_like(c)
        v1_other = lambda c: lex.verb_info(first_verb(c))[0].lemma != "like" and not is_like(c)
        breakdown = [
            ("all_verbs", lambda c: True),
            ("like", is_like),
            ("other_verbs", lambda c: not is_like(c)),
            ("v1_likes", v1_likes),
            ("v1_other", v1_other),
        ]
        row = []
        header = []
        for name, pred in breakdown:
            mean, sd = _mean_sd(_subset_accuracy(suite, results, "long-vp", pred))
            header += [f"{name}_mean", f"{name}_sd"]
            row += [repr(mean), repr(sd)]
        _write_csv(out / "ablate_longvp_breakdown.csv", header, [row], cfg.hash())
    print(f"ablate ({mode}): -> {out / 'ablate.csv'}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map usage errors onto the validation exit code
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="neglm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        p = sub.add_parser(name, **kw)
        p.add_argument("--config", help="experiment config file (key = value lines)")
        p.add_argument("--out", help="override out_dir")
        p.add_argument("--seed", type=int, help="override the seed list with a single seed")
        p.add_argument("--threads", type=int, help="parallel worker processes")
        return p

    add("gen-corpus", help="generate annotated corpora and vocabulary")
    add("gen-suite", help="generate the minimal-pair evaluation suite")
    add("train", help="train one model per seed")
    p = add("eval", help="evaluate checkpoints on the suite")
    p.add_argument("checkpoints", nargs="+", help="checkpoint files")
    p.add_argument("--suite", help="existing suite file (default: generate from config)")
    p = add("sweep-margin", help="margin-value sweep for both margin losses")
    p.add_argument("--deltas", default="0,1,10", help="comma-separated margin values")
    p = add("augment-orc", help="object-RC augmentation sweep")
    p.add_argument("--multipliers", default="1,8", help="comma-separated ORC count multipliers")
    p = add("ablate", help="train with reduced negative examples")
    p.add_argument("--mode", required=True, choices=("token", "pattern"))
    p.add_argument("--target", help="construction tag (pattern mode)")
    return parser


def main(argv=None) -> int:
    _limit_blas()
    try:
        args = _build_parser().parse_args(argv)
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.out:
            cfg = cfg.replace(out_dir=args.out)
        if args.seed is not None:
            cfg = cfg.replace(seeds=str(args.seed))
        if args.threads is not None:
            cfg = cfg.replace(threads=args.threads)

        if args.command == "gen-corpus":
            cmd_gen_corpus(cfg)
        elif args.command == "gen-suite":
            cmd_gen_suite(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "eval":
            cmd_eval(cfg, args.checkpoints, args.suite)
        elif args.command == "sweep-margin":
            cmd_sweep_margin(cfg, [float(d) for d in args.deltas.split(",")])
        elif args.command == "augment-orc":
            cmd_augment_orc(cfg, [int(m) for m in args.multipliers.split(",")])
        elif args.command == "ablate":
            cmd_ablate(cfg, args.mode, args.target)
        return 0
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
