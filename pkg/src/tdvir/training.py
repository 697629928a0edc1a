"""Learning TDV network parameters with a pairwise hinge loss and an ℓ1 sparsity term.

During training, the collection statistics a ranker reads (smoothed idf,
document lengths, average length, collection language model) are computed
over the documents of the current batch only. Evaluation and inference use
full-collection statistics.

Two independent code paths compute the loss:

* :func:`forward_loss` builds a batch sub-index, weights it with
  :func:`~tdvir.index.apply_tdv` and scores pairs with the ranking module.
* :func:`loss_and_gradients` works on dense batch-local arrays and
  back-propagates analytically through every statistic.

:func:`fd_check` compares the second against central differences of the first.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .corpus import Qrels
from .embeddings import EmbeddingMatrix
from .evaluation import ndcg_at_k
from .index import Bow, EmptyIndexError, SparseIndex, WeightedIndex, apply_tdv
from .ranking import RankedList, RankerParams, retrieve, score_bm25, score_lm, score_tfidf
from .tdvmodel import TdvParams, init_params, tdv_forward

__all__ = [
    "TRAIN_RANKERS",
    "TrainPair",
    "TrainConfig",
    "AdamState",
    "TrainingError",
    "sample_pairs",
    "forward_loss",
    "loss_and_gradients",
    "gradients",
    "fd_check",
    "fd_check_random",
    "random_batch",
    "random_params",
    "adam_step",
    "evaluate_ndcg",
    "train",
]

logger = logging.getLogger(__name__)

# training ranker kind -> retrieval ranker over the weighted index
TRAIN_RANKERS = {"tfidf": "tfidf_smooth", "bm25": "bm25", "lm": "lm"}


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainPair:
    qid: str
    q: Bow
    d_pos: int
    d_neg: int


@dataclass(frozen=True)
class TrainConfig:
    ranker: str = "bm25"
    lam: float = 0.01
    margin: float = 1.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 5
    neg_per_pos: int = 4
    seed: int = 0
    k1: float = 1.2
    b_bm25: float = 0.75
    mu: float = 2000.0
    literal_bm25_denominator: bool = False
    # start from w = 0, bias = 1 (every TDV is 1: the untrained rankers)
    zero_init: bool = False

    def __post_init__(self):
        if self.ranker not in TRAIN_RANKERS:
            raise ValueError(f"ranker must be one of {sorted(TRAIN_RANKERS)}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 0 or self.neg_per_pos < 1:
            raise ValueError("batch_size, neg_per_pos >= 1 and max_epochs, patience >= 0 required")

    @property
    def ranker_params(self) -> RankerParams:
        return RankerParams(self.k1, self.b_bm25, self.mu, self.literal_bm25_denominator)

    @property
    def retrieval_ranker(self) -> str:
        return TRAIN_RANKERS[self.ranker]

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "TrainConfig":
        """Read flat ``key = value`` lines (``#`` comments allowed)."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key = key.strip().replace("-", "_")
            if key == "lambda":
                key = "lam"
            if not sep or key not in types:
                raise ValueError(f"{path}:{lineno}: unknown setting {key!r}")
            values[key] = _coerce(raw.strip(), types[key])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _coerce(raw: str, typ: str):
    if typ == "bool":
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    if typ == "int":
        return int(raw)
    if typ == "float":
        return float(raw)
    return raw


@dataclass(frozen=True)
class AdamState:
    m_w: np.ndarray
    v_w: np.ndarray
    m_bias: float = 0.0
    v_bias: float = 0.0
    step: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim))


def sample_pairs(
    qrels: Qrels,
    base_runs: Mapping[str, RankedList],
    queries: Mapping[str, Bow],
    index: SparseIndex,
    negatives_per_positive: int = 4,
    seed: int = 0,
) -> list[TrainPair]:
    """Pair every judged-relevant document with sampled non-relevant ones.

    Negatives are drawn uniformly without replacement from the
    non-relevant part of the query's baseline run.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for qid in sorted(queries, key=lambda s: (len(s), s)):
        judged = qrels.get(qid, {})
        positives = sorted((d for d, g in judged.items() if g > 0 and d in index._docno_ids),
                           key=lambda d: (-judged[d], d))
        if not positives:
            continue
        run = base_runs.get(qid)
        negatives = [d for d in (run.docnos if run else ()) if judged.get(d, 0) <= 0]
        if not negatives:
            logger.warning("query %s: no non-relevant documents in its baseline run; skipped", qid)
            continue
        neg_ids = np.array([index.doc_id(d) for d in negatives])
        for dp in positives:
            take = min(negatives_per_positive, len(neg_ids))
            chosen = rng.choice(len(neg_ids), size=take, replace=False)
            for j in chosen:
                pairs.append(TrainPair(qid, queries[qid], index.doc_id(dp), int(neg_ids[j])))
    return pairs


def _batch_docs(batch: Sequence[TrainPair]) -> np.ndarray:
    return np.unique([p.d_pos for p in batch] + [p.d_neg for p in batch])


def _sub_index(index: SparseIndex, docs: np.ndarray) -> SparseIndex:
    """``index`` restricted to the columns ``docs`` (vocabulary kept whole)."""
    sub = index.to_scipy()[:, docs].tocsr()
    sub.sort_indices()
    return SparseIndex(index.vocab, [index.docnos[d] for d in docs], sub.indptr, sub.indices, sub.data)


def forward_loss(
    batch: Sequence[TrainPair],
    params: TdvParams,
    emb: EmbeddingMatrix,
    index: SparseIndex,
    cfg: TrainConfig,
) -> tuple[float, np.ndarray]:
    """Mean of ``(1-λ)·hinge + λ·(ℓ1(S'_d+) + ℓ1(S'_d-))`` over the batch.

    Returns the loss and the per-pair hinge values.
    """
    if not batch:
        raise ValueError("empty batch")
    docs = _batch_docs(batch)
    local = {int(d): i for i, d in enumerate(docs)}
    tdv = tdv_forward(emb, params)
    sub = _safe_apply_tdv(_sub_index(index, docs), tdv)
    rp = cfg.ranker_params

    def f(q: Bow, d: int) -> float:
        if sub is None:
            # every batch weight is zero: all scores vanish
            return 0.0
        if cfg.ranker == "tfidf":
            return score_tfidf(q, d, sub, sub.idf)
        if cfg.ranker == "bm25":
            return score_bm25(q, d, sub, sub.idf, rp)
        return score_lm(q, d, sub, sub.lm, rp)

    doc_len = np.zeros(len(docs)) if sub is None else sub.doc_len
    hinge = np.empty(len(batch))
    total = 0.0
    for i, p in enumerate(batch):
        dp, dn = local[p.d_pos], local[p.d_neg]
        hinge[i] = max(0.0, cfg.margin - f(p.q, dp) + f(p.q, dn))
        total += (1.0 - cfg.lam) * hinge[i] + cfg.lam * (doc_len[dp] + doc_len[dn])
    return total / len(batch), hinge


def _safe_apply_tdv(index: SparseIndex, tdv: np.ndarray):
    try:
        return apply_tdv(index, tdv)
    except EmptyIndexError:
        return None


def loss_and_gradients(
    batch: Sequence[TrainPair],
    params: TdvParams,
    emb: EmbeddingMatrix,
    index: SparseIndex,
    cfg: TrainConfig,
    _csc=None,
) -> tuple[float, np.ndarray, float]:
    """Loss plus its exact gradient with respect to ``(w, bias)``.

    Chains through tdv = ReLU(E w + bias), S' = tf * tdv and the batch-wise
    statistics. The max in the smoothed idf routes its subgradient to the
    heaviest row (lowest term id on ties); ReLU has zero slope at 0.
    """
    if not batch:
        raise ValueError("empty batch")
    P = len(batch)
    docs = _batch_docs(batch)
    n_b = len(docs)
    csc = index.to_scipy().tocsc() if _csc is None else _csc
    sub = csc[:, docs].tocoo()
    terms = np.unique(sub.row)
    F = np.zeros((len(terms), n_b))
    F[np.searchsorted(terms, sub.row), sub.col] = sub.data

    E = emb.matrix[terms]
    z = E @ params.w + params.bias
    tdv = np.maximum(z, 0.0)
    S = F * tdv[:, None]
    pos = S > 0
    length = S.sum(axis=0)
    avgdl = length.sum() / n_b
    mass = S.sum(axis=1)

    # query counts over the batch-local term list
    Q = np.zeros((P, len(terms)))
    qlen = np.empty(P)
    dp = np.empty(P, dtype=np.int64)
    dn = np.empty(P, dtype=np.int64)
    for i, p in enumerate(batch):
        j = np.searchsorted(terms, p.q.term_ids)
        inside = (j < len(terms)) & (terms[np.minimum(j, len(terms) - 1)] == p.q.term_ids)
        Q[i, j[inside]] = p.q.counts[inside]
        qlen[i] = p.q.length
        dp[i] = np.searchsorted(docs, p.d_pos)
        dn[i] = np.searchsorted(docs, p.d_neg)

    lam = cfg.lam
    rp = cfg.ranker_params
    k1, b, mu = rp.k1, rp.b_bm25, rp.mu
    alive = mass.max(initial=0.0) > 0

    if alive:
        top = int(np.argmax(mass))
        M = mass[top]
        live_rows = mass > 0
        idf = np.zeros(len(terms))
        idf[live_rows] = np.log((M + 1.0) / mass[live_rows])

    # per-term, per-document contribution G and the extra per-document term
    G = np.zeros_like(S)
    doc_term = np.zeros(n_b)
    if alive:
        if cfg.ranker == "tfidf":
            G[pos] = (S * idf[:, None])[pos]
        elif cfg.ranker == "bm25":
            K = k1 * (1.0 - b + b * length / avgdl)
            denom_s = F if rp.literal_bm25_denominator else S
            D = denom_s + K[None, :]
            G[pos] = (idf[:, None] * S * (k1 + 1.0) / D)[pos]
        else:
            total = mass.sum()
            pc = mass / total
            u = np.zeros_like(S)
            u[pos] = (S / (mu * np.where(pc > 0, pc, 1.0)[:, None]))[pos]
            G[pos] = np.log1p(u[pos])
            doc_term = np.log(mu / (length + mu))

    def scores(cols: np.ndarray) -> np.ndarray:
        f = np.einsum("it,ti->i", Q, G[:, cols])
        if cfg.ranker == "lm" and alive:
            f = f + qlen * doc_term[cols]
        return f

    f_pos, f_neg = scores(dp), scores(dn)
    slack = cfg.margin - f_pos + f_neg
    hinge = np.maximum(slack, 0.0)
    loss = float(np.mean((1.0 - lam) * hinge + lam * (length[dp] + length[dn])))

    if not alive:
        return loss, np.zeros(params.dim), 0.0

    # backward: coefficients of each pair's two scores
    active = (slack > 0).astype(np.float64)
    c_pos = -(1.0 - lam) * active / P
    c_neg = (1.0 - lam) * active / P
    W = np.zeros((P, n_b))
    np.add.at(W, (np.arange(P), dp), c_pos)
    np.add.at(W, (np.arange(P), dn), c_neg)
    C = Q.T @ W  # (terms, docs): d loss / d G
    g_len = np.zeros(n_b)
    np.add.at(g_len, dp, lam / P)
    np.add.at(g_len, dn, lam / P)

    g_S = np.zeros_like(S)
    g_mass = np.zeros(len(terms))
    if cfg.ranker == "tfidf":
        g_S[pos] = (C * idf[:, None])[pos]
        g_idf = np.where(pos, C * S, 0.0).sum(axis=1)
    elif cfg.ranker == "bm25":
        Cp = np.where(pos, C, 0.0)
        g_idf = (Cp * S * (k1 + 1.0) / D).sum(axis=1)
        if rp.literal_bm25_denominator:
            dS = (k1 + 1.0) / D
        else:
            dS = (k1 + 1.0) * K[None, :] / D**2
        g_S += Cp * idf[:, None] * dS
        g_K = -(Cp * idf[:, None] * S * (k1 + 1.0) / D**2).sum(axis=0)
        g_len += g_K * k1 * b / avgdl
        g_avgdl = float(np.sum(g_K * (-k1 * b * length / avgdl**2)))
        g_len += g_avgdl / n_b
    else:
        Cp = np.where(pos, C, 0.0)
        safe_pc = np.where(pc > 0, pc, 1.0)
        g_S += Cp / ((1.0 + u) * mu * safe_pc[:, None])
        g_pc = -(Cp * u / ((1.0 + u) * safe_pc[:, None])).sum(axis=1)
        g_mass += g_pc / total - np.dot(g_pc, mass) / total**2
        cq = np.zeros(n_b)
        np.add.at(cq, dp, c_pos * qlen)
        np.add.at(cq, dn, c_neg * qlen)
        g_len += cq * (-1.0 / (length + mu))
        g_idf = None

    if g_idf is not None:
        g_mass[live_rows] -= g_idf[live_rows] / mass[live_rows]
        g_mass[top] += g_idf.sum() / (M + 1.0)

    g_S += g_len[None, :] + g_mass[:, None]
    g_tdv = (g_S * F).sum(axis=1)
    g_z = np.where(z > 0, g_tdv, 0.0)
    return loss, E.T @ g_z, float(g_z.sum())


def gradients(batch, params, emb, index, cfg) -> tuple[np.ndarray, float]:
    _, g_w, g_b = loss_and_gradients(batch, params, emb, index, cfg)
    return g_w, g_b


def fd_check(
    batch: Sequence[TrainPair],
    params: TdvParams,
    emb: EmbeddingMatrix,
    index: SparseIndex,
    cfg: TrainConfig,
    h: float = 1e-4,
    coords: Sequence[int] | None = None,
) -> float:
    """Largest component-wise relative error of the analytic gradient.

    Central differences of :func:`forward_loss`; the relative error uses
    ``max(|analytic|, |numeric|, 1e-8)`` as denominator. ``coords`` limits the
    check to those entries of ``w`` (the bias is always checked).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    g_w, g_b = gradients(batch, params, emb, index, cfg)
    idx = range(params.dim) if coords is None else coords

    def loss_at(w, bias):
        return forward_loss(batch, TdvParams(w, bias), emb, index, cfg)[0]

    worst = 0.0
    for i in idx:
        e = np.zeros(params.dim)
        e[i] = h
        num = (loss_at(params.w + e, params.bias) - loss_at(params.w - e, params.bias)) / (2 * h)
        worst = max(worst, abs(g_w[i] - num) / max(abs(g_w[i]), abs(num), 1e-8))
    num = (loss_at(params.w, params.bias + h) - loss_at(params.w, params.bias - h)) / (2 * h)
    worst = max(worst, abs(g_b - num) / max(abs(g_b), abs(num), 1e-8))
    return worst


def adam_step(
    params: TdvParams,
    grads: tuple[np.ndarray, float],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[TdvParams, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    g_w, g_b = grads
    g_w = np.asarray(g_w, dtype=np.float64)
    if g_w.shape != params.w.shape:
        raise ValueError("gradient shape does not match parameters")
    t = state.step + 1
    b1, b2 = cfg.beta1, cfg.beta2
    m_w = b1 * state.m_w + (1 - b1) * g_w
    v_w = b2 * state.v_w + (1 - b2) * g_w * g_w
    m_b = b1 * state.m_bias + (1 - b1) * g_b
    v_b = b2 * state.v_bias + (1 - b2) * g_b * g_b
    c1, c2 = 1 - b1**t, 1 - b2**t
    w = params.w - cfg.lr * (m_w / c1) / (np.sqrt(v_w / c2) + cfg.eps)
    bias = params.bias - cfg.lr * (m_b / c1) / (math.sqrt(v_b / c2) + cfg.eps)
    return TdvParams(w, bias), AdamState(m_w, v_w, m_b, v_b, t)


def evaluate_ndcg(
    index: SparseIndex | WeightedIndex,
    ranker: str,
    queries: Mapping[str, Bow],
    qrels: Qrels,
    k: int = 5,
    params: RankerParams = RankerParams(),
    depth: int | None = None,
) -> float:
    """Mean nDCG@k over queries with positive judgments (full-collection stats)."""
    values = []
    for qid, q in queries.items():
        run = retrieve(index, ranker, None, q, depth or k, qid=qid, params=params)
        v = ndcg_at_k(run, qrels.get(qid, {}), k)
        if v is not None:
            values.append(v)
    return float(np.mean(values)) if values else 0.0


@dataclass
class _Best:
    epoch: int
    ndcg: float
    loss: float
    params: TdvParams


def _batches(pairs: Sequence[TrainPair], size: int, order: Iterable[int] | None = None) -> list[list[TrainPair]]:
    seq = [pairs[i] for i in order] if order is not None else list(pairs)
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def train(
    index: SparseIndex,
    emb: EmbeddingMatrix,
    queries: Mapping[str, Bow],
    qrels: Qrels,
    cfg: TrainConfig = TrainConfig(),
    *,
    pairs: Sequence[TrainPair] | None = None,
    init: TdvParams | None = None,
    log: TextIO | None = None,
) -> tuple[TdvParams, list[dict]]:
    """Adam on shuffled mini-batches with early stopping on training nDCG@5.

    Epoch 0 evaluates the initial parameters. After every epoch the loss is
    re-evaluated over fixed (unshuffled) batches and nDCG@5 is measured with
    full-collection statistics. The kept parameters are those with the best
    nDCG@5, ties going to the lower loss; training stops once ``patience``
    epochs pass without a new best. One JSON record per epoch is written to
    ``log`` when given, followed by a closing ``{"best_epoch": n}`` line.
    """
    if emb.n_terms != index.n_terms:
        raise ValueError("embedding matrix does not match the index vocabulary")
    rp = cfg.ranker_params
    ranker = cfg.retrieval_ranker
    if pairs is None:
        base = {qid: retrieve(index, "bm25", None, q, 1000, qid=qid, params=rp) for qid, q in queries.items()}
        pairs = sample_pairs(qrels, base, queries, index, cfg.neg_per_pos, cfg.seed)
    if not pairs:
        raise TrainingError("no training pairs: check qrels and baseline runs")

    if init is not None:
        params = init
    elif cfg.zero_init:
        params = TdvParams(np.zeros(emb.dim), 1.0)
    else:
        params = init_params(emb.dim, cfg.seed)
    state = AdamState.zeros(emb.dim)
    rng = np.random.default_rng(cfg.seed)
    csc = index.to_scipy().tocsc()
    fixed = _batches(pairs, cfg.batch_size)

    def epoch_loss(p: TdvParams) -> float:
        weights = np.array([len(b) for b in fixed], dtype=np.float64)
        losses = np.array([loss_and_gradients(b, p, emb, index, cfg, csc)[0] for b in fixed])
        return float(np.dot(weights, losses) / weights.sum())

    def snapshot(p: TdvParams) -> tuple[float, int]:
        tdv = tdv_forward(emb, p)
        widx = _safe_apply_tdv(index, tdv)
        ndcg = 0.0 if widx is None else evaluate_ndcg(widx, ranker, queries, qrels, 5, rp)
        return ndcg, int(np.sum(tdv == 0))

    history: list[dict] = []

    def record(epoch: int, loss: float, train_loss: float | None, p: TdvParams) -> dict:
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at epoch {epoch}; lower the learning rate")
        ndcg, zeros = snapshot(p)
        rec = {
            "epoch": epoch,
            "loss": loss,
            "train_loss": train_loss,
            "ndcg@5": ndcg,
            "zero_tdv": zeros,
            "vocab": index.n_terms,
            "bias": p.bias,
        }
        history.append(rec)
        if log is not None:
            log.write(json.dumps(rec) + "\n")
            log.flush()
        logger.info("epoch %d loss %.5f ndcg@5 %.4f zero-tdv %d", epoch, loss, ndcg, zeros)
        return rec

    rec = record(0, epoch_loss(params), None, params)
    best = _Best(0, rec["ndcg@5"], rec["loss"], params)
    for epoch in range(1, cfg.max_epochs + 1):
        batch_losses = []
        for batch in _batches(pairs, cfg.batch_size, rng.permutation(len(pairs))):
            loss, g_w, g_b = loss_and_gradients(batch, params, emb, index, cfg, csc)
            if not (math.isfinite(loss) and np.all(np.isfinite(g_w)) and math.isfinite(g_b)):
                raise TrainingError(f"non-finite loss or gradient at epoch {epoch}")
            batch_losses.append(loss)
            params, state = adam_step(params, (g_w, g_b), state, cfg)
        rec = record(epoch, epoch_loss(params), float(np.mean(batch_losses)), params)
        if rec["ndcg@5"] > best.ndcg or (rec["ndcg@5"] == best.ndcg and rec["loss"] < best.loss):
            best = _Best(epoch, rec["ndcg@5"], rec["loss"], params)
        if epoch - best.epoch >= cfg.patience:
            break
    for rec in history:
        rec["best"] = rec["epoch"] == best.epoch
    if log is not None:
        log.write(json.dumps({"best_epoch": best.epoch}) + "\n")
        log.flush()
    return best.params, history


def random_batch(index: SparseIndex, n_pairs: int, rng: np.random.Generator, max_query_terms: int = 4) -> list[TrainPair]:
    """Random pairs whose queries overlap the positive document (for gradient checks)."""
    batch = []
    for i in range(n_pairs):
        d_pos, d_neg = (int(x) for x in rng.choice(index.n_docs, size=2, replace=False))
        own = index.to_scipy()[:, d_pos].nonzero()[0]
        n_q = int(rng.integers(1, max_query_terms + 1))
        picks = list(rng.choice(own, size=min(len(own), max(1, n_q - 1)), replace=False)) if len(own) else []
        picks.append(int(rng.integers(index.n_terms)))
        counts = {int(t): int(rng.integers(1, 3)) for t in picks}
        batch.append(TrainPair(f"r{i}", Bow.from_counts(counts), d_pos, d_neg))
    return batch


def random_params(dim: int, rng: np.random.Generator) -> TdvParams:
    """Parameters with TDVs on both sides of the ReLU hinge."""
    return TdvParams(rng.normal(0.0, 1.0 / math.sqrt(dim), size=dim), float(rng.uniform(0.2, 1.2)))


def fd_check_random(
    index: SparseIndex,
    emb: EmbeddingMatrix,
    cfg: TrainConfig,
    *,
    batches: int = 20,
    pairs: int = 8,
    seed: int = 0,
    h: float = 1e-4,
    coords: int | None = None,
) -> list[float]:
    """:func:`fd_check` on ``batches`` seeded random batches; returns each max error."""
    errors = []
    for b in range(batches):
        rng = np.random.default_rng([seed, b])
        batch = random_batch(index, pairs, rng)
        params = random_params(emb.dim, rng)
        subset = None
        if coords is not None and coords < emb.dim:
            subset = sorted(int(i) for i in rng.choice(emb.dim, size=coords, replace=False))
        errors.append(fd_check(batch, params, emb, index, cfg, h, subset))
    return errors
