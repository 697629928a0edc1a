"""TF-IDF, BM25 and Dirichlet LM scoring over (weighted) inverted indexes.

The same scorers serve both the standard index and the TDV-weighted one:
a :class:`~tdvir.index.WeightedIndex` already carries statistics computed
from its weighted entries, so TDV-TF-IDF / TDV-BM25 / TDV-LM are obtained by
passing it in place of the raw index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, TextIO

import numpy as np

from .index import (
    Bow,
    CollectionLm,
    IdfTable,
    WeightedIndex,
    _BaseIndex,
    classic_idf,
    collection_lm,
    smooth_idf,
)

__all__ = [
    "RANKERS",
    "RankerParams",
    "RankedList",
    "ranker_stats",
    "score_tfidf",
    "score_bm25",
    "score_lm",
    "score_all",
    "retrieve",
    "write_run",
    "read_run",
]

RANKERS = ("tfidf_classic", "tfidf_smooth", "bm25", "lm")


@dataclass(frozen=True)
class RankerParams:
    k1: float = 1.2
    b_bm25: float = 0.75
    mu: float = 2000.0
    # use raw tf instead of tf*tdv in the TDV-BM25 saturation denominator
    literal_bm25_denominator: bool = False

    def __post_init__(self):
        if not self.k1 > 0:
            raise ValueError("k1 must be > 0")
        if not 0.0 <= self.b_bm25 <= 1.0:
            raise ValueError("b_bm25 must lie in [0, 1]")
        if not self.mu > 0:
            raise ValueError("mu must be > 0")


@dataclass(frozen=True)
class RankedList:
    """Documents in (score desc, docno asc) order."""

    qid: str
    docnos: tuple[str, ...]
    scores: tuple[float, ...]

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return iter(zip(self.docnos, self.scores))

    def __len__(self) -> int:
        return len(self.docnos)


def _check_ranker(ranker: str) -> None:
    if ranker not in RANKERS:
        raise ValueError(f"unknown ranker {ranker!r}; expected one of {RANKERS}")


def ranker_stats(index: _BaseIndex, ranker: str) -> IdfTable | CollectionLm:
    """Statistics ``ranker`` needs, taken from the weighted index when available."""
    _check_ranker(ranker)
    if ranker == "tfidf_classic":
        return classic_idf(index)
    if ranker == "lm":
        return index.lm if isinstance(index, WeightedIndex) else collection_lm(index)
    return index.idf if isinstance(index, WeightedIndex) else smooth_idf(index)


def _denominator_tf(index: _BaseIndex, term_id: int, doc_id: int, weight: float, params: RankerParams) -> float:
    if params.literal_bm25_denominator and isinstance(index, WeightedIndex):
        docs, _ = index.postings(term_id)
        j = np.searchsorted(docs, doc_id)
        lo = index.indptr[term_id]
        return float(index.tf[lo + j])
    return weight


def score_tfidf(q: Bow, d: int, index: _BaseIndex, idf: IdfTable) -> float:
    index.check_doc(d)
    score = 0.0
    for t, c in zip(q.term_ids, q.counts):
        w = index.weight(t, d)
        if w > 0:
            score += c * w * idf.values[t]
    return score


def score_bm25(q: Bow, d: int, index: _BaseIndex, idf: IdfTable, params: RankerParams = RankerParams()) -> float:
    index.check_doc(d)
    k1, b = params.k1, params.b_bm25
    norm = k1 * (1.0 - b + b * index.doc_len[d] / index.avgdl)
    score = 0.0
    for t, c in zip(q.term_ids, q.counts):
        w = index.weight(t, d)
        if w > 0:
            s = _denominator_tf(index, t, d, w, params)
            score += c * idf.values[t] * w * (k1 + 1.0) / (s + norm)
    return score


def score_lm(q: Bow, d: int, index: _BaseIndex, lm: CollectionLm, params: RankerParams = RankerParams()) -> float:
    """Dirichlet-smoothed query likelihood (rank-equivalent form).

    Query terms absent from the document contribute ``log(1 + 0) = 0``, so
    only the document-length term ``|q| log(alpha_d)`` remains for them.
    """
    index.check_doc(d)
    mu = params.mu
    score = 0.0
    for t, c in zip(q.term_ids, q.counts):
        w = index.weight(t, d)
        if w > 0:
            if lm.p[t] <= 0:
                raise ValueError(f"term {t} has weight in doc {d} but zero collection probability")
            score += c * np.log(1.0 + w / (mu * lm.p[t]))
    return score + q.length * np.log(mu / (lm.doc_len[d] + mu))


def score_all(
    index: _BaseIndex,
    ranker: str,
    stats: IdfTable | CollectionLm,
    q: Bow,
    params: RankerParams = RankerParams(),
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate scores over the query terms' posting lists.

    Returns ``(scores, candidate_mask)`` over all doc ids. Candidates are the
    documents holding a positive weight for at least one query term; zero
    entries left behind by a zero TDV are skipped so pruning cannot change
    the candidate set.
    """
    _check_ranker(ranker)
    n = index.n_docs
    scores = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    if ranker == "bm25":
        k1, b = params.k1, params.b_bm25
        norm = k1 * (1.0 - b + b * index.doc_len / index.avgdl) if n else index.doc_len
        literal = params.literal_bm25_denominator and isinstance(index, WeightedIndex)
    for t, c in zip(q.term_ids, q.counts):
        lo, hi = index.indptr[t], index.indptr[t + 1]
        if lo == hi:
            continue
        docs, w = index.indices[lo:hi], index.data[lo:hi]
        live = w > 0
        if not live.all():
            docs, w = docs[live], w[live]
            if not len(docs):
                continue
        if ranker == "bm25":
            s = index.tf[lo:hi][live] if literal else w
            scores[docs] += c * stats.values[t] * w * (k1 + 1.0) / (s + norm[docs])
        elif ranker == "lm":
            scores[docs] += c * np.log1p(w / (params.mu * stats.p[t]))
        else:
            scores[docs] += c * w * stats.values[t]
        hit[docs] = True
    if ranker == "lm":
        scores[hit] += q.length * np.log(params.mu / (stats.doc_len[hit] + params.mu))
    return scores, hit


def retrieve(
    index: _BaseIndex,
    ranker: str,
    stats: IdfTable | CollectionLm | None,
    q: Bow,
    k: int,
    *,
    qid: str = "",
    params: RankerParams = RankerParams(),
) -> RankedList:
    """Top-``k`` documents for ``q`` by (score desc, docno asc)."""
    if k <= 0:
        return RankedList(qid, (), ())
    if stats is None:
        stats = ranker_stats(index, ranker)
    scores, hit = score_all(index, ranker, stats, q, params)
    cand = np.flatnonzero(hit)
    if not len(cand):
        return RankedList(qid, (), ())
    cand_scores = scores[cand]
    if len(cand) > k:
        # keep everything tied with the k-th score so the docno tie-break is exact
        kth = np.partition(-cand_scores, k - 1)[k - 1]
        keep = -cand_scores <= kth
        cand, cand_scores = cand[keep], cand_scores[keep]
    order = np.lexsort((index.docno_rank[cand], -cand_scores))[:k]
    top = cand[order]
    return RankedList(
        qid,
        tuple(index.docnos[i] for i in top),
        tuple(float(s) for s in scores[top]),
    )


def write_run(runs: Iterable[RankedList], stream: TextIO, tag: str = "tdvir") -> None:
    """TREC run lines ``qid Q0 docno rank score tag`` (ranks start at 1)."""
    for run in runs:
        for rank, (docno, score) in enumerate(run, start=1):
            stream.write(f"{run.qid} Q0 {docno} {rank} {score!r} {tag}\n")


def read_run(stream: TextIO) -> dict[str, RankedList]:
    rows: dict[str, list[tuple[int, str, float]]] = {}
    for lineno, line in enumerate(stream, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise ValueError(f"run line {lineno}: expected 6 columns, got {len(parts)}")
        qid, _, docno, rank, score, _ = parts
        rows.setdefault(qid, []).append((int(rank), docno, float(score)))
    out = {}
    for qid, items in rows.items():
        items.sort(key=lambda r: r[0])
        out[qid] = RankedList(qid, tuple(d for _, d, _ in items), tuple(s for _, _, s in items))
    return out


def runs_to_dict(runs: Mapping[str, RankedList]) -> dict[str, dict[str, float]]:
    return {qid: dict(run) for qid, run in runs.items()}
