"""SGD training with dev-perplexity annealing and negative-example losses.

Sentences are grouped into similar-length mini-batches and padded; padded
positions are masked out of every loss.  Dev perplexity is evaluated
every check_interval LM batches (and once before training); whenever it
fails to improve on the best seen so far the learning rate is halved,
down to a floor, and the best-scoring parameters are kept as the result.

The sentence-level margin loss trains on its own mini-batches of
precomputed (positive, negative) pairs, at most half as many per epoch as
the LM batches and half their size, so the sentence throughput of both
batch kinds matches.  All other auxiliary losses ride inside the LM
batch.  Every batch loss is normalized by the number of predicted tokens
so the learning rate is comparable across batch shapes and loss kinds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from neglm import losses as lo
from neglm import model as md
from neglm import numcore as nc
from neglm.corpus import EOS_ID, Vocabulary
from neglm.negex import AnnotatedSentence

ANNEAL_RULE = (
    "halve lr when dev perplexity >= best so far at a check point; "
    "halving stops once it would drop below lr_floor"
)


@dataclass
class TrainConfig:
    batch_size: int = 128
    initial_lr: float = 2.0
    weight_decay: float = 1.2e-6
    anneal_factor: float = 0.5
    check_interval: int = 200
    max_epochs: int = 3
    seed: int = 0
    lr_floor: float = 1e-4
    clip_norm: float = 0.0  # 0 disables clipping


@dataclass
class CheckRecord:
    step: int
    lr: float
    lm_loss: float
    aux_loss: float
    dev_ppl: float


@dataclass
class TrainLog:
    records: list[CheckRecord] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)


@dataclass
class TrainResult:
    params: dict[str, nc.Tensor]  # best-dev-perplexity snapshot
    log: TrainLog


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, log: TrainLog):
        super().__init__(message)
        self.log = log


# ---------------------------------------------------------------------------
# encoding and batching
# ---------------------------------------------------------------------------


@dataclass
class EncodedSentence:
    ids: np.ndarray
    # (position, correct id, negative ids, binary label) per usable target
    targets: list[tuple[int, int, tuple[int, ...], int]]


def encode_corpus(corpus: list[AnnotatedSentence], vocab: Vocabulary) -> list[EncodedSentence]:
    """Encode tokens and targets; targets touching UNK are dropped."""
    out = []
    unk = vocab.unk_id
    for s in corpus:
        ids = vocab.encode(s.tokens)
        targets = []
        for t in s.targets:
            correct = ids[t.position]
            negs = tuple(n for n in (vocab.token_to_id.get(x, unk) for x in t.negatives) if n != unk)
            if correct != unk and negs:
                targets.append((t.position, int(correct), negs, lo.LABELS[t.number]))
        out.append(EncodedSentence(ids, targets))
    return out


def _batched_indices(lengths: np.ndarray, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle, then group similar lengths, then shuffle the groups."""
    order = rng.permutation(len(lengths))
    order = order[np.argsort(lengths[order], kind="stable")]
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    rng.shuffle(chunks)
    return chunks


def _pad(rows: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(r) for r in rows], dtype=np.int64)
    T = int(lengths.max()) if len(lengths) else 0
    padded = np.full((len(rows), T), EOS_ID, dtype=np.int64)
    for i, r in enumerate(rows):
        padded[i, : len(r)] = r
    return padded, lengths


def margin_pairs(encoded: list[EncodedSentence]) -> list[tuple[np.ndarray, np.ndarray]]:
    """All (sentence, one-token-corrupted sentence) pairs, in corpus order."""
    pairs = []
    for s in encoded:
        for pos, _, negs, _ in s.targets:
            for neg in negs:
                bad = s.ids.copy()
                bad[pos] = neg
                pairs.append((s.ids, bad))
    return pairs


def _margin_epoch_batches(
    pairs: list[tuple[np.ndarray, np.ndarray]],
    pair_batch_size: int,
    max_batches: int,
    rng: np.random.Generator,
) -> list[list[tuple[np.ndarray, np.ndarray]]]:
    if not pairs or pair_batch_size < 1 or max_batches < 1:
        return []
    lengths = np.array([len(p) for p, _ in pairs], dtype=np.int64)
    chunks = _batched_indices(lengths, pair_batch_size, rng)
    return [[pairs[i] for i in chunk] for chunk in chunks[:max_batches]]


def schedule_margin_batches(corpus: list[AnnotatedSentence], vocab: Vocabulary, batch_size: int, seed: int):
    """One epoch of sentence-pair batches: size batch_size//2, count at most
    half the LM batch count, sampled without replacement."""
    encoded = encode_corpus(corpus, vocab)
    pairs = margin_pairs(encoded)
    n_lm_batches = math.ceil(len(encoded) / batch_size)
    rng = np.random.default_rng(seed)
    yield from _margin_epoch_batches(pairs, batch_size // 2, n_lm_batches // 2, rng)


# ---------------------------------------------------------------------------
# loss assembly
# ---------------------------------------------------------------------------


def _targets_by_step(batch: list[EncodedSentence]):
    by_step: dict[int, list[tuple[int, int, tuple[int, ...], int]]] = {}
    for b, s in enumerate(batch):
        for pos, correct, negs, label in s.targets:
            by_step.setdefault(pos, []).append((b, correct, negs, label))
    return by_step


def lm_batch_loss(
    params: dict[str, nc.Tensor],
    config: md.LmConfig,
    loss_cfg: lo.LossConfig,
    batch: list[EncodedSentence],
    rng: np.random.Generator,
    head: dict[str, nc.Tensor] | None = None,
) -> tuple[nc.Tensor, float, float]:
    """Total loss node for one LM mini-batch, plus (lm, aux) scalar values."""
    rows, lengths = _pad([s.ids for s in batch])
    n_predicted = int((lengths + 1).sum())
    logps, hiddens = md.run_batch(params, config, rows, "train", rng)
    lm = lo.lm_nll(logps, rows, lengths)

    aux = None
    needs_targets = loss_cfg.kind in ("binary", "unlikelihood", "token-margin")
    by_step = _targets_by_step(batch) if needs_targets else {}
    for t, entries in sorted(by_step.items()):
        if loss_cfg.kind == "binary":
            rows_t = np.array([e[0] for e in entries])
            labels = np.array([e[3] for e in entries])
            states = nc.take_rows(hiddens[t], rows_t)
            term = lo.binary_pred_loss(states, labels, head["binhead.w"], head["binhead.b"])
        else:  # unlikelihood or token-margin
            rows_t = np.array([e[0] for e in entries for _ in e[2]])
            negs_t = np.array([n for e in entries for n in e[2]])
            neg_lp = nc.pick(logps[t], rows_t, negs_t)
            if loss_cfg.kind == "unlikelihood":
                term = nc.sum_all(lo.unlikelihood_term(neg_lp, loss_cfg.alpha))
            else:
                corr_t = np.array([e[1] for e in entries for _ in e[2]])
                corr_lp = nc.pick(logps[t], rows_t, corr_t)
                term = nc.sum_all(lo.token_margin_term(corr_lp, neg_lp, loss_cfg.delta))
        aux = term if aux is None else aux + term

    if aux is None:
        aux = nc.constant(0.0)
    aux = nc.scale(aux, 1.0 / n_predicted)
    total = lo.total_loss(lm, aux, loss_cfg)
    return total, lm.item(), aux.item()


def margin_batch_loss(
    params: dict[str, nc.Tensor],
    config: md.LmConfig,
    loss_cfg: lo.LossConfig,
    pair_batch: list[tuple[np.ndarray, np.ndarray]],
    rng: np.random.Generator,
) -> tuple[nc.Tensor, float]:
    """beta-weighted sentence-margin loss over one batch of pairs."""
    P = len(pair_batch)
    rows, lengths = _pad([p for p, _ in pair_batch] + [n for _, n in pair_batch])
    n_predicted = int((lengths[:P] + 1).sum())
    logps, _ = md.run_batch(params, config, rows, "train", rng)
    B, T = rows.shape
    sent_lp = None
    for t in range(T + 1):
        act = np.flatnonzero(lengths >= t)
        targets = np.where(t < lengths[act], rows[act, min(t, T - 1)] if T else EOS_ID, EOS_ID)
        term = nc.scatter_sum(nc.pick(logps[t], act, targets), act, B)
        sent_lp = term if sent_lp is None else sent_lp + term
    pos_lp = nc.narrow(sent_lp, 0, P)
    neg_lp = nc.narrow(sent_lp, P, 2 * P)
    hinge = nc.sum_all(lo.sentence_margin_term(pos_lp, neg_lp, loss_cfg.delta))
    loss = nc.scale(hinge, loss_cfg.beta / n_predicted)
    return loss, loss.item()


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    if max_norm <= 0:
        return grads
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / total
        grads = {k: g * factor for k, g in grads.items()}
    return grads


# ---------------------------------------------------------------------------
# perplexity
# ---------------------------------------------------------------------------


def perplexity_from_logprobs(logprobs: np.ndarray, lengths: np.ndarray) -> float:
    """exp(total NLL / total predicted tokens), EOS included per sentence."""
    with np.errstate(over="ignore"):
        return float(np.exp(-logprobs.sum() / (lengths + 1).sum()))


def perplexity(params: dict[str, nc.Tensor], config: md.LmConfig, sentences: list[np.ndarray]) -> float:
    if not sentences:
        raise ValueError("perplexity of an empty corpus is undefined")
    lp = md.sentence_logprobs(params, config, sentences)
    lengths = np.array([len(s) for s in sentences])
    return perplexity_from_logprobs(lp, lengths)


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------


def train(
    params: dict[str, nc.Tensor],
    config: md.LmConfig,
    vocab: Vocabulary,
    train_corpus: list[AnnotatedSentence],
    dev_corpus: list[AnnotatedSentence],
    loss_cfg: lo.LossConfig,
    train_cfg: TrainConfig,
) -> TrainResult:
    seq = np.random.SeedSequence(train_cfg.seed)
    shuffle_rng, dropout_rng, head_rng = (np.random.default_rng(s) for s in seq.spawn(3))

    head = None
    all_params = dict(params)
    if loss_cfg.kind == "binary":
        head = lo.init_binary_head(config.hidden_dim, head_rng, config.dtype)
        all_params.update(head)

    encoded = encode_corpus(train_corpus, vocab)
    dev_ids = [vocab.encode(s.tokens) for s in dev_corpus]
    pairs = margin_pairs(encoded) if loss_cfg.kind == "sentence-margin" else []

    log = TrainLog(meta={
        "anneal_rule": ANNEAL_RULE,
        "loss_kind": loss_cfg.kind,
        "seed": str(train_cfg.seed),
    })
    lr = train_cfg.initial_lr
    best_ppl = math.inf
    best_values: dict[str, np.ndarray] = {}
    step = 0
    lm_run: list[float] = []
    aux_run: list[float] = []

    def snapshot():
        nonlocal best_values
        best_values = {k: p.values.copy() for k, p in all_params.items()}

    def check():
        nonlocal lr, best_ppl
        ppl = perplexity(params, config, dev_ids)
        log.records.append(CheckRecord(
            step, lr,
            float(np.mean(lm_run)) if lm_run else math.nan,
            float(np.mean(aux_run)) if aux_run else 0.0,
            ppl,
        ))
        lm_run.clear()
        aux_run.clear()
        if ppl < best_ppl:
            best_ppl = ppl
            snapshot()
        elif lr * train_cfg.anneal_factor >= train_cfg.lr_floor:
            lr = lr * train_cfg.anneal_factor

    snapshot()
    check()  # baseline record before any update
    for _ in range(train_cfg.max_epochs):
        lengths = np.array([len(s.ids) for s in encoded], dtype=np.int64)
        batches = _batched_indices(lengths, train_cfg.batch_size, shuffle_rng)
        m_batches = _margin_epoch_batches(
            pairs, train_cfg.batch_size // 2, len(batches) // 2, shuffle_rng,
        ) if pairs else []
        mi = 0
        for j, idxs in enumerate(batches):
            batch = [encoded[i] for i in idxs]
            total, lm_v, aux_v = lm_batch_loss(params, config, loss_cfg, batch, dropout_rng, head)
            if not math.isfinite(total.item()):
                raise TrainingDiverged(f"non-finite loss at step {step + 1}", log)
            grads = _clip(nc.backward(total, all_params), train_cfg.clip_norm)
            nc.sgd_step(all_params, grads, lr, train_cfg.weight_decay)
            step += 1
            lm_run.append(lm_v)
            aux_run.append(aux_v)
            if mi < len(m_batches) and j % 2 == 1:
                m_total, m_v = margin_batch_loss(params, config, loss_cfg, m_batches[mi], dropout_rng)
                if not math.isfinite(m_v):
                    raise TrainingDiverged(f"non-finite margin loss at step {step}", log)
                m_grads = _clip(nc.backward(m_total, all_params), train_cfg.clip_norm)
                nc.sgd_step(all_params, m_grads, lr, train_cfg.weight_decay)
                aux_run[-1] += m_v
                mi += 1
            if step % train_cfg.check_interval == 0:
                check()
    if log.records[-1].step != step:
        check()

    best_params = {k: nc.parameter(k, v) for k, v in best_values.items()}
    return TrainResult(best_params, log)


# ---------------------------------------------------------------------------
# TrainLog serialization (CSV with '#' metadata comments)
# ---------------------------------------------------------------------------


def write_trainlog(path, log: TrainLog) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k in sorted(log.meta):
            f.write(f"# {k}: {log.meta[k]}\n")
        f.write("step,lr,lm_loss,aux_loss,dev_ppl\n")
        for r in log.records:
            f.write(f"{r.step},{r.lr!r},{r.lm_loss!r},{r.aux_loss!r},{r.dev_ppl!r}\n")


def read_trainlog(path) -> TrainLog:
    log = TrainLog()
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("# "):
                k, v = line[2:].split(": ", 1)
                log.meta[k] = v
            elif line and not line.startswith("step,"):
                step, lr, lm, aux, ppl = line.split(",")
                log.records.append(CheckRecord(int(step), float(lr), float(lm), float(aux), float(ppl)))
    return log
