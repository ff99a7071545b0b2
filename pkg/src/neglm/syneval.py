"""Minimal-pair suites and likelihood-comparison scoring.

A test case is a grammatical sentence and an ungrammatical twin differing
at exactly one position; a model is correct when it assigns the
grammatical one a strictly higher sentence log-probability.  Exact ties
count as incorrect and are tallied separately.  Reports group
constructions into Agreement / Reflexive / NPI macro categories.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from neglm import grammar
from neglm import model as md
from neglm.corpus import Vocabulary
from neglm.lexicon import Lexicon

AGREEMENT_ROWS = (
    "simple", "in-complement", "short-vp", "long-vp", "across-pp",
    "across-src", "across-orc", "across-orc-no-that", "in-orc", "in-orc-no-that",
)
REFLEXIVE_ROWS = ("refl-simple", "refl-complement", "refl-across-orc")
NPI_ROWS = ("npi-simple", "npi-across-orc")
ROW_ORDER = AGREEMENT_ROWS + REFLEXIVE_ROWS + NPI_ROWS
CATEGORIES = {"Agreement": AGREEMENT_ROWS, "Reflexive": REFLEXIVE_ROWS, "NPI": NPI_ROWS}

DISPLAY_NAMES = {
    "simple": "Simple",
    "in-complement": "In a sentential complement",
    "short-vp": "Short VP coordination",
    "long-vp": "Long VP coordination",
    "across-pp": "Across a PP",
    "across-src": "Across a SRC",
    "across-orc": "Across an ORC",
    "across-orc-no-that": "Across an ORC (no that)",
    "in-orc": "In an ORC",
    "in-orc-no-that": "In an ORC (no that)",
    "refl-simple": "Reflexive: Simple",
    "refl-complement": "Reflexive: In a sentential complement",
    "refl-across-orc": "Reflexive: Across an ORC",
    "npi-simple": "NPI: Simple",
    "npi-across-orc": "NPI: Across an ORC",
}


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    grammatical: tuple[str, ...]
    ungrammatical: tuple[str, ...]
    construction: str
    differing_position: int


@dataclass
class RowStats:
    n: int = 0
    correct: int = 0
    ties: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0


@dataclass
class SuiteReport:
    rows: dict[str, RowStats] = field(default_factory=dict)
    macro: dict[str, float] = field(default_factory=dict)
    unk_tokens: int = 0
    per_case: list[tuple[bool, bool]] = field(default_factory=list)  # (correct, tie)


def generate_suite(
    lexicon: Lexicon,
    constructions: tuple[str, ...],
    n_per_construction: int,
    seed: int,
) -> list[TestCase]:
    """n distinct minimal pairs per requested construction tag."""
    for tag in constructions:
        if tag not in grammar.BUILDERS:
            raise ValueError(f"unknown construction tag {tag!r}")
    rng = np.random.default_rng(seed)
    cases: list[TestCase] = []
    for tag in constructions:
        seen = set()
        picked = 0
        attempts = 0
        while picked < n_per_construction:
            draft = grammar.build_sentence(rng, lexicon, tag, suite=True)
            bad = grammar.ungrammatical_twin(rng, lexicon, draft)
            key = (tuple(draft.tokens), tuple(bad))
            attempts += 1
            if key in seen and attempts < 60 * n_per_construction:
                continue
            seen.add(key)
            cases.append(TestCase(tuple(draft.tokens), tuple(bad), tag, draft.critical))
            picked += 1
    return cases


def score_pair(params, config: md.LmConfig, vocab: Vocabulary, case: TestCase) -> bool:
    """True iff the grammatical sentence is strictly more likely."""
    lp_g = md.sentence_logprob(params, config, vocab.encode(list(case.grammatical)))
    lp_u = md.sentence_logprob(params, config, vocab.encode(list(case.ungrammatical)))
    return lp_g > lp_u


def evaluate(params, config: md.LmConfig, vocab: Vocabulary, suite: list[TestCase]) -> SuiteReport:
    """Score every pair (batched) and aggregate per construction and category."""
    if not suite:
        raise ValueError("empty test suite")
    gram = [vocab.encode(list(c.grammatical)) for c in suite]
    ungram = [vocab.encode(list(c.ungrammatical)) for c in suite]
    unk = sum(int((ids == vocab.unk_id).sum()) for ids in gram + ungram)
    lps = md.sentence_logprobs(params, config, gram + ungram)
    lp_g, lp_u = lps[: len(suite)], lps[len(suite):]

    report = SuiteReport(unk_tokens=unk)
    for case, g, u in zip(suite, lp_g, lp_u):
        stats = report.rows.setdefault(case.construction, RowStats())
        stats.n += 1
        correct = bool(g > u)
        tie = bool(g == u)
        if correct:
            stats.correct += 1
        if tie:
            stats.ties += 1
        report.per_case.append((correct, tie))
    for name, members in CATEGORIES.items():
        present = [report.rows[m].accuracy for m in members if m in report.rows]
        if present:
            report.macro[name] = float(np.mean(present))
    return report


def subject_is_animate(case: TestCase, lexicon: Lexicon) -> bool:
    """Animacy of the main subject (the noun right after the determiner)."""
    info = lexicon.noun_info(case.grammatical[1])
    return bool(info and info[0].animate)


# ---------------------------------------------------------------------------
# files: suite TSV, report CSV, markdown table
# ---------------------------------------------------------------------------


def write_suite(path, cases: list[TestCase]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for c in cases:
            f.write("\t".join([
                " ".join(c.grammatical), " ".join(c.ungrammatical),
                c.construction, str(c.differing_position),
            ]))
            f.write("\n")


def read_suite(path) -> list[TestCase]:
    cases = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            gram, ungram, tag, pos = line.split("\t")
            cases.append(TestCase(tuple(gram.split(" ")), tuple(ungram.split(" ")), tag, int(pos)))
    return cases


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def write_report_csv(path, report: SuiteReport, provenance: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# config-hash: {provenance}\n")
        f.write("construction,n,correct,ties,accuracy\n")
        for tag in ROW_ORDER:
            if tag in report.rows:
                s = report.rows[tag]
                f.write(f"{tag},{s.n},{s.correct},{s.ties},{s.accuracy!r}\n")
        for name in CATEGORIES:
            if name in report.macro:
                f.write(f"macro-{name.lower()},,,,{report.macro[name]!r}\n")
        f.write(f"unk-tokens,{report.unk_tokens},,,\n")


def report_markdown(report: SuiteReport, perplexity: float | None = None) -> str:
    lines = ["| Construction | n | Accuracy |", "|---|---|---|"]
    for tag in ROW_ORDER:
        if tag in report.rows:
            s = report.rows[tag]
            lines.append(f"| {DISPLAY_NAMES[tag]} | {s.n} | {100 * s.accuracy:.1f} |")
    for name, value in report.macro.items():
        lines.append(f"| Macro: {name} | | {100 * value:.1f} |")
    if perplexity is not None:
        lines.append(f"| Perplexity | | {perplexity:.2f} |")
    return "\n".join(lines) + "\n"
