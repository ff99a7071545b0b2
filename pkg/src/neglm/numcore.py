"""Dense float tensors with reverse-mode automatic differentiation.

Just enough operations for LSTM language models and their auxiliary
losses: matmul, elementwise arithmetic, gate nonlinearities, log-softmax,
row/element gathers, segment sums, dropout and reductions.  A computation
graph is built dynamically while forward expressions are evaluated (each
Tensor records its parents and a vector-Jacobian closure), consumed once
by backward(), and discarded.

Everything is numpy underneath.  float64 is the default and is what the
gradient-check tolerances assume; float32 is supported for long training
runs where memory bandwidth dominates.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_DTYPE = np.float64


class Tensor:
    """One node of the computation graph.

    `values` is treated as immutable once the node has been produced by an
    operation; read-only sharing across threads is safe.  Parameter leaves
    (trainable=True) outlive the graphs built on top of them and are
    replaced wholesale by sgd_step between batches.
    """

    __slots__ = ("values", "parents", "vjp", "trainable", "name")

    def __init__(self, values, parents=(), vjp=None, trainable=False, name=None):
        if not isinstance(values, np.ndarray):
            values = np.asarray(values, dtype=DEFAULT_DTYPE)
        self.values = values
        self.parents = parents
        self.vjp = vjp
        self.trainable = trainable
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def item(self) -> float:
        return float(self.values)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.values.shape}, dtype={self.values.dtype}{tag})"

    def __add__(self, other):
        return add(self, _wrap(other, self))

    def __radd__(self, other):
        return add(_wrap(other, self), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self))

    def __rmul__(self, other):
        return mul(_wrap(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(values, dtype=None) -> Tensor:
    """Non-trainable leaf."""
    return Tensor(np.asarray(values, dtype=dtype or DEFAULT_DTYPE))


def parameter(name: str, values) -> Tensor:
    """Trainable leaf; `values` is used as-is (dtype preserved)."""
    return Tensor(np.asarray(values), trainable=True, name=name)


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.values.dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / linear algebra
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.values + b.values
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.values - b.values
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.values * b.values
    return Tensor(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.values, a.values.shape), _unbroadcast(g * a.values, b.values.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.values, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor(a.values * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product a @ b."""
    out = a.values @ b.values
    return Tensor(out, (a, b), lambda g: (g @ b.values.T, a.values.T @ g))


def matmul_nt(a: Tensor, b: Tensor) -> Tensor:
    """a @ b.T without materializing the transpose node."""
    out = a.values @ b.values.T
    return Tensor(out, (a, b), lambda g: (g @ b.values, g.T @ a.values))


def sigmoid(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-a.values))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is taken as 0."""
    out = np.maximum(a.values, 0.0)
    return Tensor(out, (a,), lambda g: (g * (a.values > 0.0),))


def narrow(a: Tensor, lo: int, hi: int) -> Tensor:
    """Slice [lo:hi) of the last axis."""
    out = a.values[..., lo:hi]

    def vjp(g):
        z = np.zeros_like(a.values)
        z[..., lo:hi] = g
        return (z,)

    return Tensor(out, (a,), vjp)


# ---------------------------------------------------------------------------
# softmax / gathers / reductions
# ---------------------------------------------------------------------------


def log_softmax(a: Tensor) -> Tensor:
    """Log-probabilities along the last axis, stable via max subtraction."""
    if a.values.size == 0 or a.values.shape[-1] == 0:
        raise ValueError("empty distribution")
    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return Tensor(out, (a,), vjp)


def pick(a: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Gather a.values[rows[k], cols[k]] into a 1-D vector."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = a.values[rows, cols]

    def vjp(g):
        z = np.zeros_like(a.values)
        np.add.at(z, (rows, cols), g)
        return (z,)

    return Tensor(out, (a,), vjp)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather a.values[idx]; duplicate indices accumulate in backward."""
    idx = np.asarray(idx, dtype=np.intp)
    out = a.values[idx]

    def vjp(g):
        z = np.zeros_like(a.values)
        np.add.at(z, idx, g)
        return (z,)

    return Tensor(out, (a,), vjp)


def scatter_sum(v: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """out[j] = sum of v[k] over k with segments[k] == j."""
    segments = np.asarray(segments, dtype=np.intp)
    out = np.bincount(segments, weights=v.values, minlength=num_segments).astype(v.values.dtype)
    return Tensor(out, (v,), lambda g: (g[segments],))


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.values.sum(), dtype=a.values.dtype)
    return Tensor(out, (a,), lambda g: (np.broadcast_to(g, a.values.shape).astype(a.values.dtype),))


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.values.size)


def log1m_exp(a: Tensor) -> Tensor:
    """log(1 - exp(a)) for a <= 0, with 1 - exp(a) clamped below at 1e-12.

    Inside the clamp region the derivative is defined as 0.
    """
    x = a.values
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(x < -0.6931471805599453, np.log1p(-np.exp(x)), np.log(-np.expm1(x)))
    floor = np.log(1e-12)
    clamped = raw < floor
    out = np.where(clamped, floor, raw).astype(x.dtype)

    def vjp(g):
        with np.errstate(over="ignore"):
            d = -np.exp(x - out)
        return (g * np.where(clamped, 0.0, d),)

    return Tensor(out, (a,), vjp)


def dropout(t: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scale survivors by 1/(1-rate); identity in eval mode."""
    if rate >= 1.0:
        raise ValueError(f"dropout rate must be < 1, got {rate}")
    if not training or rate == 0.0:
        return t
    keep = (rng.random(t.values.shape) >= rate).astype(t.values.dtype)
    mask = keep / (1.0 - rate)
    out = t.values * mask
    return Tensor(out, (t,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# backward pass and optimizer step
# ---------------------------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    """Iterative post-order: every reachable node once, parents before consumers."""
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    return topo


def backward(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with respect to every named parameter.

    Parameters that do not lie on any path to the loss get an exact zero
    gradient of matching shape.
    """
    if loss.values.size != 1:
        raise ValueError("loss must be a scalar node")
    topo = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    leaf_grads: dict[int, np.ndarray] = {}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.trainable:
            leaf_grads[id(node)] = g
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg
    return {
        name: leaf_grads.get(id(p), np.zeros_like(p.values))
        for name, p in params.items()
    }


def sgd_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], lr: float, weight_decay: float = 0.0) -> None:
    """p <- p - lr * (g + weight_decay * p), elementwise, out of place."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.values.shape:
            raise ValueError(f"shape mismatch for {name!r}: param {p.values.shape} vs grad {g.shape}")
        if weight_decay:
            g = g + weight_decay * p.values
        p.values = p.values - lr * g


# ---------------------------------------------------------------------------
# finite differences (the independent oracle used by the gradient checks)
# ---------------------------------------------------------------------------


def fd_gradients(
    loss_fn: Callable[[dict[str, np.ndarray]], float],
    values: dict[str, np.ndarray],
    step: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central finite differences of loss_fn at `values`, one element at a time.

    loss_fn must be a pure function of the supplied arrays.
    """
    out = {}
    for name, v in values.items():
        g = np.zeros_like(v, dtype=np.float64)
        flat = v.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn(values)
            flat[i] = orig - step
            lo = loss_fn(values)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        out[name] = g
    return out
