"""Learned term discrimination values for inverted-index retrieval.

A one-layer ReLU network over word embeddings assigns each term a
non-negative weight (its TDV). The weights are trained through
differentiable TF-IDF, BM25 and Dirichlet LM rankers, and the posting lists
of terms whose weight is exactly zero are removed from the index.
"""

__version__ = "0.1.0"

from .corpus import PreprocessConfig, parse_qrels, parse_trec_documents, parse_trec_topics, preprocess
from .embeddings import EmbeddingMatrix, align, load_vectors
from .estimators import TdvLearner, TdvRetriever
from .index import (
    Bow,
    SparseIndex,
    Vocabulary,
    WeightedIndex,
    apply_tdv,
    bow,
    build_index,
    load_index,
    prune,
    save_index,
)
from .ranking import RankedList, RankerParams, retrieve
from .tdvmodel import TdvParams, init_params, tdv_forward
from .training import TrainConfig, train

__all__ = [
    "Bow",
    "EmbeddingMatrix",
    "PreprocessConfig",
    "RankedList",
    "RankerParams",
    "SparseIndex",
    "TdvLearner",
    "TdvParams",
    "TdvRetriever",
    "TrainConfig",
    "Vocabulary",
    "WeightedIndex",
    "align",
    "apply_tdv",
    "bow",
    "build_index",
    "init_params",
    "load_index",
    "load_vectors",
    "parse_qrels",
    "parse_trec_documents",
    "parse_trec_topics",
    "preprocess",
    "prune",
    "retrieve",
    "save_index",
    "tdv_forward",
    "train",
]
