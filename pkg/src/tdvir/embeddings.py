"""Pre-trained word vectors (fastText ``.vec`` text) aligned to an index vocabulary."""

from __future__ import annotations

import hashlib
import io
import logging
from dataclasses import dataclass
from typing import BinaryIO, TextIO

import numpy as np

from .index import Vocabulary

__all__ = [
    "EmbeddingTable",
    "EmbeddingMatrix",
    "EmbeddingFormatError",
    "load_vectors",
    "align",
]

logger = logging.getLogger(__name__)


class EmbeddingFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"{message} (line {line})" if line is not None else message)
        self.line = line


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]
    duplicates: int = 0

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __getitem__(self, word: str) -> np.ndarray:
        return self.vectors[word]


@dataclass(frozen=True)
class EmbeddingMatrix:
    """|V| x dim matrix whose row t is the (frozen) embedding of term t."""

    matrix: np.ndarray
    oov_ids: frozenset[int]

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "oov_ids", frozenset(self.oov_ids))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_terms(self) -> int:
        return self.matrix.shape[0]


def load_vectors(stream: TextIO | BinaryIO | str | bytes) -> EmbeddingTable:
    """Parse the fastText text format: a ``count dim`` header then ``word v1 .. vdim``."""
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    header = stream.readline()
    if isinstance(header, bytes):
        raise TypeError("open .vec files in text mode (encoding='utf-8')")
    parts = header.split()
    if len(parts) != 2:
        raise EmbeddingFormatError("header must be 'count dim'", line=1)
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise EmbeddingFormatError("header must be 'count dim'", line=1) from None
    if dim < 1:
        raise EmbeddingFormatError("dimension must be positive", line=1)

    vectors: dict[str, np.ndarray] = {}
    duplicates = 0
    for lineno, line in enumerate(stream, start=2):
        # words may contain non-breaking spaces; fastText separates with ' '
        fields = line.rstrip("\n\r ").split(" ")
        if fields == [""]:
            continue
        word, values = fields[0], fields[1:]
        if len(values) != dim:
            raise EmbeddingFormatError(f"expected {dim} values for {word!r}, got {len(values)}", line=lineno)
        try:
            vec = np.array(values, dtype=np.float64)
        except ValueError:
            raise EmbeddingFormatError(f"non-numeric value in vector for {word!r}", line=lineno) from None
        if word in vectors:
            duplicates += 1
        vectors[word] = vec
    if duplicates:
        logger.warning("%d duplicate words in vector file; kept the last occurrence", duplicates)
    if len(vectors) + duplicates != count:
        logger.warning("header announces %d vectors, file holds %d lines", count, len(vectors) + duplicates)
    return EmbeddingTable(dim, vectors, duplicates)


def _hash_vector(term: str, dim: int, scale: float, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(term.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng([seed, int.from_bytes(digest, "little")])
    return rng.uniform(-scale, scale, size=dim)


def align(
    vocab: Vocabulary,
    table: EmbeddingTable,
    oov_policy: str = "zeros",
    *,
    surface_forms=None,
    scale: float = 0.1,
    seed: int = 0,
) -> EmbeddingMatrix:
    """Stack the vector of each vocabulary term into a matrix.

    Lookup tries the index term itself, then its most frequent surface form
    (stemmed terms rarely exist verbatim in raw-word vector files). Terms
    still missing get zeros, or with ``oov_policy="hash_uniform"`` a
    vector drawn from U(-scale, scale) seeded by ``(seed, term)``.
    """
    if oov_policy not in ("zeros", "hash_uniform"):
        raise ValueError(f"unknown oov_policy {oov_policy!r}")
    matrix = np.zeros((len(vocab), table.dim))
    oov = []
    for t, term in enumerate(vocab.terms):
        vec = table.vectors.get(term)
        if vec is None and surface_forms is not None and surface_forms[t]:
            vec = table.vectors.get(surface_forms[t])
        if vec is not None:
            matrix[t] = vec
            continue
        oov.append(t)
        if oov_policy == "hash_uniform":
            matrix[t] = _hash_vector(term, table.dim, scale, seed)
    if oov:
        logger.info("%d of %d terms have no pre-trained vector", len(oov), len(vocab))
    return EmbeddingMatrix(matrix, frozenset(oov))
