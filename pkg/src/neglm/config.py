"""Flat key = value experiment configuration.

One file drives a whole run: corpus generation, model size, loss choice,
training schedule, suite settings and output locations.  Unknown keys are
rejected so typos fail fast, and every command writes the fully resolved
configuration next to its outputs for exact reruns.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields

from neglm import losses as lo
from neglm import trainer as tr
from neglm.corpus import CorpusConfig
from neglm.model import LmConfig
from neglm.syneval import ROW_ORDER


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # corpus
    num_sentences: int = 50_000
    corpus_seed: int = 1
    min_freq: int = 1
    max_sentence_len: int = 20
    train_frac: float = 0.8
    dev_frac: float = 0.1
    test_frac: float = 0.1
    lexicon_file: str = ""  # empty: packaged default lexicon
    lexicon_scope: str = "full"
    mix_simple: float = 0.25
    mix_across_pp: float = 0.13
    mix_across_src: float = 0.12
    mix_across_orc: float = 0.01
    mix_across_orc_no_that: float = 0.01
    mix_short_vp: float = 0.06
    mix_long_vp: float = 0.10
    mix_reflexive: float = 0.12
    mix_in_complement: float = 0.12
    mix_npi: float = 0.08
    # model
    num_layers: int = 2
    embed_dim: int = 64
    hidden_dim: int = 128
    dropout_embed: float = 0.1
    dropout_hidden: float = 0.1
    tie_embeddings: bool = True
    precision: str = "double"
    # loss
    loss_kind: str = "none"
    alpha: float = 1.0
    beta: float = 1.0
    delta: float = 10.0
    # training
    batch_size: int = 128
    initial_lr: float = 2.0
    weight_decay: float = 1.2e-6
    anneal_factor: float = 0.5
    check_interval: int = 200
    max_epochs: int = 3
    lr_floor: float = 1e-4
    clip_norm: float = 0.0
    # run
    seeds: str = "0,1,2,3,4"
    data_dir: str = "data"
    out_dir: str = "runs/exp"
    threads: int = 1
    # evaluation suite
    n_per_construction: int = 400
    suite_seed: int = 97
    suite_constructions: str = "all"

    # -- derived views -------------------------------------------------

    @property
    def seed_list(self) -> list[int]:
        return [int(s) for s in self.seeds.split(",") if s.strip() != ""]

    def mix(self) -> dict[str, float]:
        return {
            f.name[len("mix_"):].replace("_", "-"): getattr(self, f.name)
            for f in fields(self)
            if f.name.startswith("mix_")
        }

    def constructions(self) -> tuple[str, ...]:
        if self.suite_constructions == "all":
            return ROW_ORDER
        return tuple(t.strip() for t in self.suite_constructions.split(",") if t.strip())

    def corpus_config(self) -> CorpusConfig:
        return CorpusConfig(
            num_sentences=self.num_sentences,
            mix=self.mix(),
            seed=self.corpus_seed,
            lexicon_path=self.lexicon_file or None,
            lexicon_scope=self.lexicon_scope,
            max_len=self.max_sentence_len,
        )

    def lm_config(self, vocab_size: int) -> LmConfig:
        return LmConfig(
            vocab_size=vocab_size,
            num_layers=self.num_layers,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            dropout_embed=self.dropout_embed,
            dropout_hidden=self.dropout_hidden,
            tie_embeddings=self.tie_embeddings,
            precision=self.precision,
        )

    def loss_config(self) -> lo.LossConfig:
        return lo.LossConfig(kind=self.loss_kind, alpha=self.alpha, beta=self.beta, delta=self.delta)

    def train_config(self, seed: int) -> tr.TrainConfig:
        return tr.TrainConfig(
            batch_size=self.batch_size,
            initial_lr=self.initial_lr,
            weight_decay=self.weight_decay,
            anneal_factor=self.anneal_factor,
            check_interval=self.check_interval,
            max_epochs=self.max_epochs,
            seed=seed,
            lr_floor=self.lr_floor,
            clip_norm=self.clip_norm,
        )

    # -- serialization ---------------------------------------------------

    def to_text(self) -> str:
        lines = ["# resolved experiment configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:12]

    def replace(self, **kw) -> "ExperimentConfig":
        data = asdict(self)
        data.update(kw)
        return ExperimentConfig(**data)


_PARSERS = {bool: lambda s: _parse_bool(s), int: int, float: float, str: lambda s: s}


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def load_config(path) -> ExperimentConfig:
    """Parse a key = value file (UTF-8, '#' comments); unknown keys are errors."""
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    types = {f.name: type(getattr(ExperimentConfig(), f.name)) for f in fields(ExperimentConfig)}
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _PARSERS[types[key]](value)
            except (ValueError, ConfigError) as e:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {e}") from None
    return ExperimentConfig(**values)
