"""The LM cross-entropy objective and the four auxiliary negative-example losses.

Kinds:
  binary          multi-task singular/plural prediction from the LM state
  unlikelihood    -alpha * log(1 - p(negative token))
  token-margin    hinge between log p(correct) and log p(negative) per token
  sentence-margin hinge between log p(sentence) and log p(negative sentence)

Binary and sentence-margin combine as lm + beta * aux; unlikelihood and
token-margin add their per-token terms inside the LM sum itself.  All
functions build numcore graph nodes so gradients flow through whichever
parameters produced the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from neglm import numcore as nc
from neglm.corpus import EOS_ID
from neglm.lexicon import PLURAL, SINGULAR

LOSS_KINDS = ("none", "binary", "unlikelihood", "sentence-margin", "token-margin")

# binary-head label indices
LABELS = {SINGULAR: 0, PLURAL: 1}


@dataclass
class LossConfig:
    kind: str = "none"
    alpha: float = 1.0   # unlikelihood weight
    beta: float = 1.0    # relative weight of the auxiliary loss
    delta: float = 10.0  # margin value

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        for name in ("alpha", "beta", "delta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")


def _as_node(x) -> nc.Tensor:
    return x if isinstance(x, nc.Tensor) else nc.constant(x)


def lm_nll(logps: list[nc.Tensor], token_rows: np.ndarray, lengths: np.ndarray) -> nc.Tensor:
    """Mean -log p(target) over every predicted position in the batch.

    logps holds T+1 per-step (B, V) log-probability nodes for a padded
    (B, T) batch; position t of sentence b is predicted while t <= len(b),
    with EOS as the final target.  Padded positions are excluded.
    """
    token_rows = np.asarray(token_rows, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    B, T = token_rows.shape
    if len(logps) != T + 1:
        raise ValueError(f"expected {T + 1} prediction steps, got {len(logps)}")
    total = None
    count = 0
    for t in range(T + 1):
        rows = np.flatnonzero(lengths >= t)
        if rows.size == 0:
            continue
        targets = np.where(t < lengths[rows], token_rows[rows, np.minimum(t, T - 1)] if T else EOS_ID, EOS_ID)
        term = nc.sum_all(nc.pick(logps[t], rows, targets))
        total = term if total is None else total + term
        count += rows.size
    assert total is not None
    return nc.scale(total, -1.0 / count)


def init_binary_head(hidden_dim: int, rng: np.random.Generator, dtype=np.float64) -> dict[str, nc.Tensor]:
    w = rng.uniform(-0.1, 0.1, size=(hidden_dim, 2)).astype(dtype)
    return {
        "binhead.w": nc.parameter("binhead.w", w),
        "binhead.b": nc.parameter("binhead.b", np.zeros(2, dtype=dtype)),
    }


def binary_pred_loss(states: nc.Tensor | None, labels: np.ndarray, w: nc.Tensor, b: nc.Tensor) -> nc.Tensor:
    """Sum over targets of -log softmax(W h + b)[label].

    `states` is a (K, H) node of hidden states, one per target, each taken
    at the position predicting that target token; labels index LABELS.
    Returns an exact zero for K == 0.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if states is None or labels.size == 0:
        return nc.constant(0.0)
    logits = nc.matmul(states, w) + b
    logp = nc.log_softmax(logits)
    return nc.neg(nc.sum_all(nc.pick(logp, np.arange(labels.size), labels)))


def unlikelihood_term(logp_neg, alpha: float) -> nc.Tensor:
    """-alpha * log(1 - p) from log p, elementwise; stable and clamped near p=1."""
    return nc.scale(nc.log1m_exp(_as_node(logp_neg)), -alpha)


def token_margin_term(logp_correct, logp_neg, delta: float) -> nc.Tensor:
    """max(0, delta - (log p(correct) - log p(negative))), elementwise."""
    # written as hinge(neg - correct + delta) so the scalar follows the
    # operands' dtype instead of promoting float32 graphs to float64
    return nc.relu((_as_node(logp_neg) - _as_node(logp_correct)) + float(delta))


def sentence_margin_term(logp_x, logp_xneg, delta: float) -> nc.Tensor:
    """Same hinge at sentence granularity: both inputs are sentence log-probs."""
    return token_margin_term(logp_x, logp_xneg, delta)


def total_loss(lm_component, aux_component, config: LossConfig):
    """Combine per the configured kind.

    binary / sentence-margin: lm + beta * aux.  unlikelihood / token-margin:
    lm + aux, the aux already carrying its own weighting inside the
    per-token sum.  none: lm.
    """
    lm = _as_node(lm_component)
    if config.kind == "none":
        return lm
    aux = _as_node(aux_component)
    if config.kind in ("binary", "sentence-margin"):
        return lm + nc.scale(aux, config.beta)
    return lm + aux
