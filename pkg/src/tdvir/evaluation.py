"""Effectiveness metrics, paired significance testing and query-level cross-validation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence, TextIO

import numpy as np
from scipy import stats as sps

from .corpus import Qrels
from .ranking import RankedList

__all__ = [
    "MetricReport",
    "TTestResult",
    "ndcg_at_k",
    "recall_at_k",
    "evaluate",
    "paired_t_test",
    "make_folds",
    "cross_validate",
    "parse_metric",
]

logger = logging.getLogger(__name__)


def ndcg_at_k(run: RankedList, judged: Mapping[str, int], k: int = 5) -> float | None:
    """Linear-gain nDCG with a ``log2(rank + 1)`` discount.

    Returns ``None`` when the query has no positive judgment.
    """
    ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:k]
    if not ideal:
        return None
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    idcg = float(np.dot(ideal, discounts[:len(ideal)]))
    gains = [max(judged.get(d, 0), 0) for d in run.docnos[:k]]
    dcg = float(np.dot(gains, discounts[:len(gains)])) if gains else 0.0
    return dcg / idcg


def recall_at_k(run: RankedList, judged: Mapping[str, int], k: int = 1000) -> float | None:
    relevant = {d for d, g in judged.items() if g > 0}
    if not relevant:
        return None
    return len(relevant.intersection(run.docnos[:k])) / len(relevant)


_METRICS: dict[str, Callable] = {"ndcg": ndcg_at_k, "recall": recall_at_k}


def parse_metric(name: str) -> tuple[str, int]:
    """``"ndcg@5"`` -> ``("ndcg", 5)``."""
    base, _, cutoff = name.strip().lower().partition("@")
    if base not in _METRICS or not cutoff.isdigit() or int(cutoff) < 1:
        raise ValueError(f"unknown metric {name!r}; expected ndcg@K or recall@K")
    return base, int(cutoff)


@dataclass
class MetricReport:
    metric: str
    per_query: dict[str, float]
    tag: str = ""
    excluded: list[str] = field(default_factory=list)

    @property
    def mean(self) -> float:
        if not self.per_query:
            return 0.0
        return float(np.mean(list(self.per_query.values())))

    def write_tsv(self, stream: TextIO) -> None:
        for qid in sorted(self.per_query, key=_qid_key):
            stream.write(f"{self.metric}\t{qid}\t{self.per_query[qid]:.4f}\n")
        stream.write(f"{self.metric}\tall\t{self.mean:.4f}\n")


def _qid_key(qid: str):
    return (0, int(qid), "") if qid.isdigit() else (1, 0, qid)


def evaluate(runs: Mapping[str, RankedList], qrels: Qrels, metric: str = "ndcg@5", tag: str = "") -> MetricReport:
    """Per-query values over the queries of ``runs`` that have positive judgments."""
    base, k = parse_metric(metric)
    fn = _METRICS[base]
    per_query, excluded = {}, []
    for qid, run in runs.items():
        value = fn(run, qrels.get(qid, {}), k)
        if value is None:
            excluded.append(qid)
        else:
            per_query[qid] = value
    return MetricReport(metric.lower(), per_query, tag, excluded)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p_raw: float
    p_bonferroni: float
    degenerate: bool = False


def paired_t_test(a: Sequence[float], b: Sequence[float], comparisons: int = 1) -> TTestResult:
    """Two-tailed paired t-test on ``a - b`` with Bonferroni adjustment.

    Zero-variance differences are handled explicitly: a zero mean gives
    ``p = 1``; a non-zero mean gives ``p = 0`` with ``degenerate=True``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least two queries")
    if comparisons < 1:
        raise ValueError("comparisons must be >= 1")
    diff = a - b
    mean = diff.mean()
    sd = diff.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, 1.0)
        return TTestResult(math.copysign(math.inf, mean), 0.0, 0.0, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    p = float(2.0 * sps.t.sf(abs(t), df=n - 1))
    return TTestResult(float(t), p, min(1.0, p * comparisons))


def make_folds(qids: Sequence[str], folds: int = 5, seed: int = 0) -> list[list[str]]:
    """Seeded shuffle of ``qids`` dealt into ``folds`` near-equal folds."""
    if folds < 2:
        raise ValueError("need at least two folds")
    if len(qids) < folds:
        raise ValueError(f"{len(qids)} queries cannot fill {folds} folds")
    order = sorted(qids, key=_qid_key)
    perm = np.random.default_rng(seed).permutation(len(order))
    shuffled = [order[i] for i in perm]
    return [list(chunk) for chunk in np.array_split(np.array(shuffled, dtype=object), folds)]


@dataclass
class FoldResult:
    fold: int
    best_config: Hashable
    tuning_score: float
    test_values: dict[str, float]


def cross_validate(
    qids: Sequence[str],
    grid: Sequence[Hashable],
    fit: Callable[[list[str], Hashable], object],
    score: Callable[[object, list[str]], Mapping[str, float]],
    *,
    folds: int = 5,
    seed: int = 0,
    has_positives: Callable[[str], bool] | None = None,
) -> tuple[list[FoldResult], dict[str, float]]:
    """Grid search on the training folds, report on the held-out fold.

    ``fit(train_qids, config)`` returns a model; ``score(model, qids)`` maps
    each qid to its metric value (e.g. nDCG@5). The configuration with the
    best mean score on its own training queries is evaluated on the held-out
    fold. Returns per-fold results and the pooled held-out values.
    """
    if not grid:
        raise ValueError("empty hyper-parameter grid")
    split = make_folds(qids, folds, seed)
    results, pooled = [], {}
    for i, test in enumerate(split):
        if has_positives is not None and not any(has_positives(q) for q in test):
            logger.warning("fold %d has no query with positive judgments; skipped", i)
            continue
        train = [q for j, fold in enumerate(split) if j != i for q in fold]
        best = None
        for config in grid:
            model = fit(train, config)
            values = score(model, train)
            mean = float(np.mean(list(values.values()))) if values else 0.0
            if best is None or mean > best[1]:
                best = (config, mean, model)
        config, tuning, model = best
        test_values = dict(score(model, test))
        results.append(FoldResult(i, config, tuning, test_values))
        pooled.update(test_values)
    return results, pooled
