"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .embeddings import EmbeddingMatrix
from .index import Bow, SparseIndex, WeightedIndex, _BaseIndex


def check_index(X, *, raw: bool = False) -> _BaseIndex:
    expected = SparseIndex if raw else (SparseIndex, WeightedIndex)
    if not isinstance(X, expected):
        kind = "a SparseIndex" if raw else "a SparseIndex or WeightedIndex"
        raise TypeError(f"expected {kind}, got {type(X).__name__}")
    if X.n_docs == 0:
        raise ValueError("index holds no documents")
    return X


def check_queries(queries: Mapping[str, Bow], index: _BaseIndex) -> Mapping[str, Bow]:
    if not isinstance(queries, Mapping):
        raise TypeError("queries must map qid -> Bow")
    for qid, q in queries.items():
        if not isinstance(q, Bow):
            raise TypeError(f"query {qid!r} is {type(q).__name__}, expected Bow")
        if len(q) and (q.term_ids.min() < 0 or q.term_ids.max() >= index.n_terms):
            raise ValueError(f"query {qid!r} refers to term ids outside the vocabulary")
    return queries


def check_embeddings(emb, index: _BaseIndex) -> EmbeddingMatrix:
    if isinstance(emb, np.ndarray):
        emb = EmbeddingMatrix(emb, frozenset())
    if not isinstance(emb, EmbeddingMatrix):
        raise TypeError("embeddings must be an EmbeddingMatrix or a 2-D array")
    if emb.n_terms != index.n_terms:
        raise ValueError(f"embeddings have {emb.n_terms} rows, vocabulary has {index.n_terms} terms")
    if not np.all(np.isfinite(emb.matrix)):
        raise ValueError("embeddings contain non-finite values")
    return emb
