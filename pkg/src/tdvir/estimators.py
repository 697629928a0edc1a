"""scikit-learn style wrappers: a retriever and a TDV learner/transformer.

>>> from tdvir.datasets import make_planted_corpus
>>> from tdvir.index import build_index, bow
>>> from tdvir.embeddings import align
>>> data = make_planted_corpus(n_docs=60, n_topic=10, n_noise=40, n_queries=6)
>>> vocab, index = build_index(data.docs)
>>> queries = {qid: bow(toks, vocab) for qid, toks in data.queries.items()}
>>> emb = align(vocab, data.vectors)
>>> learner = TdvLearner(ranker="bm25", max_epochs=2).fit(index, data.qrels, queries=queries, embeddings=emb)
>>> weighted = learner.transform(index)
>>> runs = TdvRetriever(ranker="bm25", k=10).fit(weighted).predict(queries)
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_embeddings, check_index, check_queries
from .corpus import Qrels
from .evaluation import evaluate
from .index import Bow, SparseIndex, WeightedIndex, apply_tdv, prune
from .ranking import RANKERS, RankedList, RankerParams, ranker_stats, retrieve
from .tdvmodel import tdv_forward
from .training import TrainConfig, train

__all__ = ["TdvRetriever", "TdvLearner"]


class TdvRetriever(BaseEstimator):
    """Top-k retrieval over a raw or TDV-weighted index.

    Fitting only precomputes the ranker's collection statistics; given a
    :class:`~tdvir.index.WeightedIndex` the TDV variant of the ranker runs.
    """

    def __init__(self, ranker="bm25", k=1000, k1=1.2, b_bm25=0.75, mu=2000.0, literal_bm25_denominator=False):
        self.ranker = ranker
        self.k = k
        self.k1 = k1
        self.b_bm25 = b_bm25
        self.mu = mu
        self.literal_bm25_denominator = literal_bm25_denominator

    def _params(self) -> RankerParams:
        return RankerParams(self.k1, self.b_bm25, self.mu, self.literal_bm25_denominator)

    def fit(self, X, y=None):
        if self.ranker not in RANKERS:
            raise ValueError(f"ranker must be one of {RANKERS}")
        self._params()
        self.index_ = check_index(X)
        self.stats_ = ranker_stats(self.index_, self.ranker)
        return self

    def predict(self, queries: Mapping[str, Bow]) -> dict[str, RankedList]:
        check_is_fitted(self, "index_")
        check_queries(queries, self.index_)
        params = self._params()
        return {
            qid: retrieve(self.index_, self.ranker, self.stats_, q, self.k, qid=qid, params=params)
            for qid, q in queries.items()
        }

    def score(self, queries: Mapping[str, Bow], qrels: Qrels, metric: str = "ndcg@5") -> float:
        return evaluate(self.predict(queries), qrels, metric).mean


class TdvLearner(TransformerMixin, BaseEstimator):
    """Learns term discrimination values and re-weights an index with them.

    Parameters mirror :class:`~tdvir.training.TrainConfig`; ``random_state``
    seeds initialization, pair sampling and batch shuffling. With
    ``prune=True`` the transformed index drops zero-TDV posting lists.
    """

    def __init__(
        self,
        ranker="bm25",
        lam=0.01,
        lr=1e-3,
        batch_size=64,
        max_epochs=100,
        patience=5,
        neg_per_pos=4,
        k1=1.2,
        b_bm25=0.75,
        mu=2000.0,
        literal_bm25_denominator=False,
        prune=True,
        random_state=0,
    ):
        self.ranker = ranker
        self.lam = lam
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.neg_per_pos = neg_per_pos
        self.k1 = k1
        self.b_bm25 = b_bm25
        self.mu = mu
        self.literal_bm25_denominator = literal_bm25_denominator
        self.prune = prune
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            ranker=self.ranker, lam=self.lam, lr=self.lr, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience, neg_per_pos=self.neg_per_pos,
            seed=int(self.random_state), k1=self.k1, b_bm25=self.b_bm25, mu=self.mu,
            literal_bm25_denominator=self.literal_bm25_denominator,
        )

    def fit(self, X, y: Qrels, *, queries: Mapping[str, Bow], embeddings, log=None):
        index = check_index(X, raw=True)
        check_queries(queries, index)
        emb = check_embeddings(embeddings, index)
        self.params_, self.history_ = train(index, emb, queries, y, self._config(), log=log)
        self.tdv_ = tdv_forward(emb, self.params_)
        self.vocab_ = index.vocab
        self.n_zero_tdv_ = int(np.sum(self.tdv_ == 0))
        return self

    def transform(self, X) -> WeightedIndex:
        check_is_fitted(self, "tdv_")
        index = check_index(X, raw=True)
        if index.vocab != self.vocab_:
            raise ValueError("index vocabulary differs from the one seen in fit")
        weighted = apply_tdv(index, self.tdv_)
        if self.prune:
            # the pruned index carries its own PruneReport
            weighted, _ = prune(weighted)
        return weighted
