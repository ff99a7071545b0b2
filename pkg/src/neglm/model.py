"""Multi-layer LSTM language model with tied input/output embeddings.

Sentences are modeled left to right from a BOS symbol; the distribution
at position t conditions on BOS and tokens[0..t-1], and the final
position predicts EOS.  With tied embeddings the hidden state is mapped
back to embedding space by a learned projection and scored against the
input embedding matrix itself.

The forward pass builds a numcore graph, so the same code path serves
training (with per-step dropout) and evaluation (dropout is identity,
outputs are deterministic).
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from neglm import numcore as nc
from neglm.corpus import BOS_ID, EOS_ID, Vocabulary

CHECKPOINT_MAGIC = b"NEGEXLM1"


@dataclass
class LmConfig:
    vocab_size: int
    num_layers: int = 2
    embed_dim: int = 64
    hidden_dim: int = 128
    dropout_embed: float = 0.1
    dropout_hidden: float = 0.1
    tie_embeddings: bool = True
    precision: str = "double"  # double | single

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32


def init_params(config: LmConfig, rng: np.random.Generator) -> dict[str, nc.Tensor]:
    """Uniform [-0.1, 0.1] weights, zero biases, forget-gate bias +1."""
    V, E, H = config.vocab_size, config.embed_dim, config.hidden_dim
    dt = config.dtype

    def uniform(name, shape):
        return nc.parameter(name, rng.uniform(-0.1, 0.1, size=shape).astype(dt))

    params = {"embedding": uniform("embedding", (V, E))}
    for layer in range(config.num_layers):
        in_dim = E if layer == 0 else H
        params[f"lstm{layer}.wx"] = uniform(f"lstm{layer}.wx", (in_dim, 4 * H))
        params[f"lstm{layer}.wh"] = uniform(f"lstm{layer}.wh", (H, 4 * H))
        bias = np.zeros(4 * H, dtype=dt)
        bias[H:2 * H] = 1.0  # forget gate starts open
        params[f"lstm{layer}.bias"] = nc.parameter(f"lstm{layer}.bias", bias)
    params["proj"] = uniform("proj", (H, E))
    if not config.tie_embeddings:
        params["out_embedding"] = uniform("out_embedding", (V, E))
    params["out_bias"] = nc.parameter("out_bias", np.zeros(V, dtype=dt))
    return params


def _check_tokens(tokens: np.ndarray, vocab_size: int) -> None:
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab_size):
        raise ValueError(f"token id out of range for vocab of size {vocab_size}")


def run_batch(
    params: dict[str, nc.Tensor],
    config: LmConfig,
    token_rows: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[list[nc.Tensor], list[nc.Tensor]]:
    """Forward over a padded (B, T) batch of token ids.

    Returns T+1 per-step log-probability nodes of shape (B, V) and the
    matching top-layer hidden-state nodes (B, H); step t conditions on BOS
    and columns [0, t) of token_rows.  Padding is the caller's concern:
    steps beyond a sentence's length simply produce unused rows.
    """
    token_rows = np.asarray(token_rows, dtype=np.int64)
    _check_tokens(token_rows, config.vocab_size)
    training = mode == "train"
    if training and rng is None:
        raise ValueError("training mode needs an rng for dropout")
    B, T = token_rows.shape
    H = config.hidden_dim
    dt = config.dtype

    emb = params["embedding"]
    out_table = emb if config.tie_embeddings else params["out_embedding"]
    zero_state = nc.constant(np.zeros((B, H)), dtype=dt)
    states = [(zero_state, zero_state) for _ in range(config.num_layers)]
    bos_col = np.full(B, BOS_ID, dtype=np.int64)

    logps: list[nc.Tensor] = []
    hiddens: list[nc.Tensor] = []
    for t in range(T + 1):
        ids = bos_col if t == 0 else token_rows[:, t - 1]
        x = nc.take_rows(emb, ids)
        x = nc.dropout(x, config.dropout_embed, rng, training)
        for layer in range(config.num_layers):
            h_prev, c_prev = states[layer]
            gates = nc.matmul(x, params[f"lstm{layer}.wx"]) + nc.matmul(h_prev, params[f"lstm{layer}.wh"])
            gates = gates + params[f"lstm{layer}.bias"]
            i = nc.sigmoid(nc.narrow(gates, 0, H))
            f = nc.sigmoid(nc.narrow(gates, H, 2 * H))
            g = nc.tanh(nc.narrow(gates, 2 * H, 3 * H))
            o = nc.sigmoid(nc.narrow(gates, 3 * H, 4 * H))
            c = f * c_prev + i * g
            h = o * nc.tanh(c)
            states[layer] = (h, c)
            # dropout feeds the next layer / decoder; recurrence keeps raw h
            x = nc.dropout(h, config.dropout_hidden, rng, training)
        hiddens.append(x)
        logits = nc.matmul_nt(nc.matmul(x, params["proj"]), out_table) + params["out_bias"]
        logps.append(nc.log_softmax(logits))
    return logps, hiddens


def forward(
    params: dict[str, nc.Tensor],
    config: LmConfig,
    tokens,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Log-probability vectors for positions 0..n (the last targets EOS)."""
    row = np.asarray(tokens, dtype=np.int64).reshape(1, -1)
    logps, _ = run_batch(params, config, row, mode, rng)
    return np.stack([lp.values[0] for lp in logps])


def hidden_states(params: dict[str, nc.Tensor], config: LmConfig, tokens) -> np.ndarray:
    """Top-layer states used to predict positions 0..n (eval mode)."""
    row = np.asarray(tokens, dtype=np.int64).reshape(1, -1)
    _, hiddens = run_batch(params, config, row, "eval")
    return np.stack([h.values[0] for h in hiddens])


def sentence_logprob(params: dict[str, nc.Tensor], config: LmConfig, tokens) -> float:
    """log p(tokens, EOS | BOS); always <= 0."""
    return float(sentence_logprobs(params, config, [np.asarray(tokens, dtype=np.int64)])[0])


def sentence_logprobs(
    params: dict[str, nc.Tensor],
    config: LmConfig,
    sentences: list[np.ndarray],
    batch_size: int = 256,
) -> np.ndarray:
    """Batched eval-mode scoring, bucketed by length."""
    out = np.zeros(len(sentences))
    by_len: dict[int, list[int]] = {}
    for idx, s in enumerate(sentences):
        by_len.setdefault(len(s), []).append(idx)
    for length, idxs in sorted(by_len.items()):
        for lo in range(0, len(idxs), batch_size):
            chunk = idxs[lo:lo + batch_size]
            rows = np.stack([np.asarray(sentences[i], dtype=np.int64) for i in chunk]) if length else np.zeros((len(chunk), 0), dtype=np.int64)
            logps, _ = run_batch(params, config, rows, "eval")
            targets = np.concatenate([rows, np.full((len(chunk), 1), EOS_ID, dtype=np.int64)], axis=1)
            total = np.zeros(len(chunk))
            arange = np.arange(len(chunk))
            for t in range(length + 1):
                total += logps[t].values[arange, targets[:, t]]
            out[chunk] = total
    return out


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
# Layout: magic "NEGEXLM1", little-endian uint64 header length, JSON header
# (config, vocabulary, parameter names/shapes/dtypes in order), then the raw
# parameter buffers concatenated in header order (C-contiguous).


def save_checkpoint(path, config: LmConfig, vocab: Vocabulary, params: dict[str, nc.Tensor]) -> None:
    header = {
        "config": asdict(config),
        "vocab": {"tokens": vocab.id_to_token, "min_freq": vocab.min_freq},
        "params": [
            {"name": name, "shape": list(p.values.shape), "dtype": str(p.values.dtype)}
            for name, p in params.items()
        ],
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for p in params.values():
            f.write(np.ascontiguousarray(p.values).tobytes())


def load_checkpoint(path) -> tuple[LmConfig, Vocabulary, dict[str, nc.Tensor]]:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a model checkpoint: bad magic {magic!r}")
        (header_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(header_len).decode("utf-8"))
        config = LmConfig(**header["config"])
        tokens = header["vocab"]["tokens"]
        vocab = Vocabulary(tokens, {t: i for i, t in enumerate(tokens)}, header["vocab"]["min_freq"])
        params = {}
        for meta in header["params"]:
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            dtype = np.dtype(meta["dtype"])
            buf = f.read(count * dtype.itemsize)
            arr = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
            params[meta["name"]] = nc.parameter(meta["name"], arr)
    return config, vocab, params
