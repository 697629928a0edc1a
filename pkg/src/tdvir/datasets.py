"""Synthetic collections for tests, examples and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Qrels
from .embeddings import EmbeddingTable

__all__ = ["TOY_CORPUS", "make_random_corpus", "PlantedCorpus", "make_planted_corpus"]

TOY_CORPUS = [
    ("d1", ["apple", "apple", "banana"]),
    ("d2", ["banana", "cherry"]),
    ("d3", ["cherry", "cherry", "cherry"]),
]


def make_random_corpus(
    n_docs: int = 100,
    n_terms: int = 50,
    *,
    min_len: int = 1,
    max_len: int = 40,
    seed: int = 0,
) -> list[tuple[str, list[str]]]:
    """Documents with Zipf-like term draws over ``t000..``; docnos ``doc0000..``."""
    rng = np.random.default_rng(seed)
    weights = 1.0 / np.arange(1, n_terms + 1)
    weights /= weights.sum()
    names = [f"t{i:03d}" for i in range(n_terms)]
    docs = []
    for d in range(n_docs):
        length = int(rng.integers(min_len, max_len + 1))
        draws = rng.choice(n_terms, size=length, p=weights)
        docs.append((f"doc{d:04d}", [names[t] for t in draws]))
    return docs


@dataclass
class PlantedCorpus:
    docs: list[tuple[str, list[str]]]
    queries: dict[str, list[str]]
    qrels: Qrels
    vectors: EmbeddingTable
    topic_terms: list[str]
    noise_terms: list[str]


def make_planted_corpus(
    n_docs: int = 500,
    n_topic: int = 100,
    n_noise: int = 400,
    n_queries: int = 50,
    *,
    topics_per_doc: int = 3,
    noise_per_doc: int = 30,
    topics_per_query: int = 2,
    noise_per_query: int = 3,
    dim: int = 16,
    seed: int = 0,
) -> PlantedCorpus:
    """Collection where only "topic" terms carry relevance.

    Every document mixes a few topic terms with uniformly drawn noise
    tokens. Queries pair topic terms with noise terms, and a document's grade
    for a query is the number of the query's topic terms it contains. Topic
    and noise embeddings are drawn around opposite centroids, so a linear
    model over them can tell the two groups apart.
    """
    rng = np.random.default_rng(seed)
    topic = [f"topic{i:03d}" for i in range(n_topic)]
    noise = [f"noise{i:03d}" for i in range(n_noise)]

    docs = []
    doc_topics = []
    for d in range(n_docs):
        chosen = rng.choice(n_topic, size=topics_per_doc, replace=False)
        tokens = []
        for t in chosen:
            tokens += [topic[t]] * int(rng.integers(1, 4))
        tokens += [noise[t] for t in rng.integers(0, n_noise, size=noise_per_doc)]
        rng.shuffle(tokens)
        docs.append((f"P{d:04d}", tokens))
        doc_topics.append(set(int(t) for t in chosen))

    queries: dict[str, list[str]] = {}
    qrels: Qrels = {}
    for q in range(n_queries):
        qid = str(q + 1)
        qt = rng.choice(n_topic, size=topics_per_query, replace=False)
        qn = rng.choice(n_noise, size=noise_per_query, replace=False)
        queries[qid] = [topic[t] for t in qt] + [noise[t] for t in qn]
        judged = {}
        for d, topics in enumerate(doc_topics):
            grade = len(topics.intersection(int(t) for t in qt))
            if grade:
                judged[docs[d][0]] = grade
        qrels[qid] = judged

    centroid = rng.normal(size=dim)
    centroid /= np.linalg.norm(centroid)
    vectors = {}
    for name in topic:
        vectors[name] = centroid + 0.5 * rng.normal(size=dim) / np.sqrt(dim)
    for name in noise:
        vectors[name] = -centroid + 0.5 * rng.normal(size=dim) / np.sqrt(dim)
    return PlantedCorpus(docs, queries, qrels, EmbeddingTable(dim, vectors), topic, noise)
