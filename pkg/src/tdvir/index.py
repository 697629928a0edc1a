"""Inverted index as a sparse term-by-document matrix.

Rows are posting lists (sorted by doc id), columns are document bags of words.
A :class:`SparseIndex` stores raw term frequencies; a :class:`WeightedIndex`
stores ``tf * tdv`` and carries statistics recomputed from those weights.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import PreprocessConfig

__all__ = [
    "Vocabulary",
    "Bow",
    "SparseIndex",
    "WeightedIndex",
    "IdfTable",
    "CollectionLm",
    "PruneReport",
    "IndexBuildError",
    "EmptyIndexError",
    "IndexFormatError",
    "build_index",
    "bow",
    "classic_idf",
    "smooth_idf",
    "collection_lm",
    "apply_tdv",
    "prune",
    "save_index",
    "load_index",
    "dumps_index",
    "loads_index",
]


class IndexBuildError(ValueError):
    pass


class EmptyIndexError(ValueError):
    """Raised when a statistic needs mass the index does not have."""


class IndexFormatError(ValueError):
    pass


class Vocabulary:
    """Bijection between term strings and dense ids ``0..len-1``."""

    def __init__(self, terms: Iterable[str]):
        self.terms: tuple[str, ...] = tuple(terms)
        self._ids = {t: i for i, t in enumerate(self.terms)}
        if len(self._ids) != len(self.terms):
            raise IndexBuildError("vocabulary terms must be unique")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self._ids

    def __getitem__(self, term: str) -> int:
        return self._ids[term]

    def get(self, term: str, default=None):
        return self._ids.get(term, default)

    def term(self, term_id: int) -> str:
        return self.terms[term_id]

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.terms == other.terms

    def __repr__(self) -> str:
        return f"Vocabulary({len(self)} terms)"


@dataclass(frozen=True)
class Bow:
    """Sparse term-count vector of a query or document.

    ``term_ids`` are sorted; ``oov`` counts dropped out-of-vocabulary tokens.
    """

    term_ids: np.ndarray
    counts: np.ndarray
    oov: int = 0

    @classmethod
    def from_counts(cls, counts: Mapping[int, int], oov: int = 0) -> "Bow":
        items = sorted((int(t), int(c)) for t, c in counts.items() if c)
        ids = np.array([t for t, _ in items], dtype=np.int64)
        cnt = np.array([c for _, c in items], dtype=np.float64)
        return cls(ids, cnt, oov)

    @property
    def length(self) -> float:
        """ℓ1 norm of the in-vocabulary counts."""
        return float(self.counts.sum())

    def as_dict(self) -> dict[int, int]:
        return {int(t): int(c) for t, c in zip(self.term_ids, self.counts)}

    def __len__(self) -> int:
        return len(self.term_ids)


def bow(tokens: Iterable[str], vocab: Vocabulary) -> Bow:
    counts: Counter = Counter()
    oov = 0
    for tok in tokens:
        t = vocab.get(tok)
        if t is None:
            oov += 1
        else:
            counts[t] += 1
    return Bow.from_counts(counts, oov)


@dataclass(frozen=True)
class IdfTable:
    values: np.ndarray
    flavor: str  # "classic_l0" | "smooth_l1"

    def __getitem__(self, term_id: int) -> float:
        return float(self.values[term_id])


@dataclass(frozen=True)
class CollectionLm:
    p: np.ndarray
    doc_len: np.ndarray

    def alpha(self, mu: float) -> np.ndarray:
        return mu / (self.doc_len + mu)


@dataclass(frozen=True)
class PruneReport:
    entries_before: int
    entries_after: int

    @property
    def reduction_percent(self) -> float:
        if self.entries_before == 0:
            return 0.0
        return (1.0 - self.entries_after / self.entries_before) * 100.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class _BaseIndex:
    """Shared CSR storage and the statistics every ranker reads."""

    def __init__(
        self,
        vocab: Vocabulary,
        docnos: Sequence[str],
        indptr: np.ndarray,
        indices: np.ndarray,
        data: np.ndarray,
        *,
        surface_forms: Sequence[str] | None = None,
        preprocess: PreprocessConfig | None = None,
    ):
        self.vocab = vocab
        self.docnos: tuple[str, ...] = tuple(docnos)
        self.indptr = _frozen(np.asarray(indptr, dtype=np.int64))
        self.indices = _frozen(np.asarray(indices, dtype=np.int64))
        self.data = _frozen(np.asarray(data, dtype=np.float64))
        self.surface_forms = tuple(surface_forms) if surface_forms is not None else None
        self.preprocess = preprocess
        if len(self.indptr) != len(vocab) + 1 or self.indptr[-1] != len(self.indices):
            raise IndexBuildError("inconsistent posting-list offsets")
        if len(self.indices) != len(self.data):
            raise IndexBuildError("posting doc ids and weights differ in length")
        self._docno_ids = {d: i for i, d in enumerate(self.docnos)}
        self._docno_rank = None
        if len(self._docno_ids) != len(self.docnos):
            raise IndexBuildError("duplicate docno")

        self.entry_rows = _frozen(np.repeat(np.arange(len(vocab), dtype=np.int64), np.diff(self.indptr)))
        self.doc_len = _frozen(np.bincount(self.indices, weights=self.data, minlength=self.n_docs).astype(np.float64))
        self.row_mass = _frozen(np.bincount(self.entry_rows, weights=self.data, minlength=self.n_terms).astype(np.float64))
        self.row_count = _frozen(np.bincount(self.entry_rows, weights=(self.data > 0), minlength=self.n_terms).astype(np.int64))

    @property
    def n_terms(self) -> int:
        return len(self.vocab)

    @property
    def n_docs(self) -> int:
        return len(self.docnos)

    @property
    def entry_count(self) -> int:
        """Number of stored posting entries (explicit zeros included)."""
        return int(len(self.indices))

    @property
    def total_mass(self) -> float:
        return float(self.row_mass.sum())

    @property
    def avgdl(self) -> float:
        if self.n_docs == 0:
            raise EmptyIndexError("average document length of an empty collection")
        return float(self.doc_len.sum()) / self.n_docs

    @property
    def docno_rank(self) -> np.ndarray:
        """Position of each doc id in ascending docno order (tie-break key)."""
        if self._docno_rank is None:
            rank = np.empty(self.n_docs, dtype=np.int64)
            rank[np.argsort(np.array(self.docnos, dtype=object), kind="stable")] = np.arange(self.n_docs)
            self._docno_rank = _frozen(rank)
        return self._docno_rank

    def doc_id(self, docno: str) -> int:
        return self._docno_ids[docno]

    def postings(self, term_id: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[term_id], self.indptr[term_id + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def weight(self, term_id: int, doc_id: int) -> float:
        docs, weights = self.postings(term_id)
        j = np.searchsorted(docs, doc_id)
        if j < len(docs) and docs[j] == doc_id:
            return float(weights[j])
        return 0.0

    def check_doc(self, doc_id: int) -> None:
        if not 0 <= doc_id < self.n_docs:
            raise KeyError(f"unknown doc id {doc_id}")

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.array(self.data), np.array(self.indices), np.array(self.indptr)),
            shape=(self.n_terms, self.n_docs),
        )

    def _same_storage(self, other: "_BaseIndex") -> bool:
        return (
            self.vocab == other.vocab
            and self.docnos == other.docnos
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
            and self.surface_forms == other.surface_forms
            and self.preprocess == other.preprocess
        )


class SparseIndex(_BaseIndex):
    """Raw term-frequency index S."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if np.any(self.data <= 0) or np.any(self.data != np.round(self.data)):
            raise IndexBuildError("term frequencies must be positive integers")

    def __eq__(self, other) -> bool:
        return type(other) is SparseIndex and self._same_storage(other)

    __hash__ = None

    def __repr__(self) -> str:
        return f"SparseIndex(terms={self.n_terms}, docs={self.n_docs}, entries={self.entry_count})"


class WeightedIndex(_BaseIndex):
    """TDV-weighted index S' = tf * tdv with statistics recomputed from S'.

    Smoothed idf, document lengths, average length and the collection
    language model are all derived from the weighted entries, so rankers run
    unchanged over it.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        docnos: Sequence[str],
        indptr: np.ndarray,
        indices: np.ndarray,
        tf: np.ndarray,
        tdv: np.ndarray,
        *,
        entries_before_prune: int | None = None,
        surface_forms: Sequence[str] | None = None,
        preprocess: PreprocessConfig | None = None,
    ):
        tdv = np.asarray(tdv, dtype=np.float64)
        if tdv.shape != (len(vocab),):
            raise ValueError(f"tdv has shape {tdv.shape}, expected ({len(vocab)},)")
        if np.any(tdv < 0) or not np.all(np.isfinite(tdv)):
            raise ValueError("tdv values must be finite and non-negative")
        indptr = np.asarray(indptr, dtype=np.int64)
        tf = np.asarray(tf, dtype=np.float64)
        rows = np.repeat(np.arange(len(vocab)), np.diff(indptr))
        super().__init__(
            vocab, docnos, indptr, indices, tf * tdv[rows],
            surface_forms=surface_forms, preprocess=preprocess,
        )
        self.tf = _frozen(tf)
        self.tdv = _frozen(tdv)
        self.entries_before_prune = entries_before_prune
        self.idf = smooth_idf(self)
        self.lm = collection_lm(self)

    @property
    def pruned(self) -> bool:
        return self.entries_before_prune is not None

    @property
    def prune_report(self) -> PruneReport | None:
        if self.entries_before_prune is None:
            return None
        return PruneReport(self.entries_before_prune, self.entry_count)

    def __eq__(self, other) -> bool:
        return (
            type(other) is WeightedIndex
            and self._same_storage(other)
            and np.array_equal(self.tf, other.tf)
            and np.array_equal(self.tdv, other.tdv)
            and self.entries_before_prune == other.entries_before_prune
        )

    __hash__ = None

    def __repr__(self) -> str:
        zeros = int(np.sum(self.tdv == 0))
        return (
            f"WeightedIndex(terms={self.n_terms}, docs={self.n_docs}, "
            f"entries={self.entry_count}, zero_tdv={zeros}, pruned={self.pruned})"
        )


def build_index(
    docs: Iterable[tuple[str, Sequence[str]]],
    *,
    surface_forms: Mapping[str, str] | None = None,
    preprocess: PreprocessConfig | None = None,
) -> tuple[Vocabulary, SparseIndex]:
    """Count term frequencies into a sorted-vocabulary CSR index.

    Documents keep their input order as doc ids.
    """
    docnos: list[str] = []
    seen: set[str] = set()
    bags: list[Counter] = []
    for docno, tokens in docs:
        if docno in seen:
            raise IndexBuildError(f"duplicate docno {docno!r}")
        seen.add(docno)
        docnos.append(docno)
        bags.append(Counter(tokens))

    vocab = Vocabulary(sorted(set().union(*bags)) if bags else [])
    rows, cols, vals = [], [], []
    for d, bag in enumerate(bags):
        for term, tf in bag.items():
            rows.append(vocab[term])
            cols.append(d)
            vals.append(tf)
    rows_a = np.array(rows, dtype=np.int64)
    cols_a = np.array(cols, dtype=np.int64)
    vals_a = np.array(vals, dtype=np.float64)
    order = np.lexsort((cols_a, rows_a))
    indptr = np.zeros(len(vocab) + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows_a, minlength=len(vocab)), out=indptr[1:])

    surf = None
    if surface_forms is not None:
        surf = [surface_forms.get(t, "") for t in vocab.terms]
    index = SparseIndex(
        vocab, docnos, indptr, cols_a[order], vals_a[order],
        surface_forms=surf, preprocess=preprocess,
    )
    return vocab, index


def classic_idf(index: _BaseIndex) -> IdfTable:
    """``log((|C|+1)/df)`` with df the ℓ0 norm of the row; empty rows get 0."""
    if index.n_docs < 1:
        raise EmptyIndexError("idf needs at least one document")
    df = index.row_count.astype(np.float64)
    values = np.zeros(index.n_terms)
    nz = df > 0
    values[nz] = np.log((index.n_docs + 1) / df[nz])
    return IdfTable(_frozen(values), "classic_l0")


def smooth_idf(index: _BaseIndex) -> IdfTable:
    """``log((max_t' ℓ1(row t') + 1) / ℓ1(row t))``; empty rows get 0.

    The max normalization keeps every non-empty row strictly positive.
    """
    mass = index.row_mass
    if mass.size == 0 or mass.max() <= 0:
        raise EmptyIndexError("smoothed idf of an index with no posting mass")
    top = mass.max()
    values = np.zeros(index.n_terms)
    nz = mass > 0
    values[nz] = np.log((top + 1.0) / mass[nz])
    return IdfTable(_frozen(values), "smooth_l1")


def collection_lm(index: _BaseIndex) -> CollectionLm:
    total = index.total_mass
    if total <= 0:
        raise EmptyIndexError("collection language model of an index with zero mass")
    return CollectionLm(_frozen(index.row_mass / total), index.doc_len)


def apply_tdv(index: SparseIndex, tdv: np.ndarray) -> WeightedIndex:
    """Weight every posting entry by its term's TDV.

    Zero-TDV rows keep their (now zero) entries until :func:`prune`.
    """
    if not isinstance(index, SparseIndex):
        raise TypeError("apply_tdv expects a raw SparseIndex")
    tdv = np.asarray(tdv, dtype=np.float64)
    if tdv.shape != (index.n_terms,):
        raise ValueError(f"tdv has shape {tdv.shape}, expected ({index.n_terms},)")
    if np.any(tdv < 0):
        raise ValueError("negative tdv values are not allowed")
    return WeightedIndex(
        index.vocab, index.docnos, index.indptr, index.indices, index.data, tdv,
        surface_forms=index.surface_forms, preprocess=index.preprocess,
    )


def prune(index: WeightedIndex) -> tuple[WeightedIndex, PruneReport]:
    """Drop the posting lists of zero-TDV terms. Scores are unaffected."""
    before = index.entries_before_prune if index.pruned else index.entry_count
    keep = index.tdv[index.entry_rows] > 0
    counts = np.bincount(index.entry_rows[keep], minlength=index.n_terms)
    indptr = np.zeros(index.n_terms + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    pruned = WeightedIndex(
        index.vocab, index.docnos, indptr, index.indices[keep], index.tf[keep], index.tdv,
        entries_before_prune=before,
        surface_forms=index.surface_forms, preprocess=index.preprocess,
    )
    return pruned, PruneReport(before, pruned.entry_count)


# -- serialization ---------------------------------------------------------
#
# Little-endian layout, version 1:
#   b"TDVI" | u32 version | u8 kind (0 raw, 1 weighted) | u8 pruned
#   | u64 entries_before_prune
#   strings(n_terms)   vocabulary, id order
#   strings(n_docs)    docnos, id order
#   u8 has_surface [strings(n_terms)]
#   u8 has_preprocess [u8 lowercase, string stemmer, strings(stopwords, sorted)]
#   u32 n_lists, then per non-empty list:
#       u32 term id | u32 count | u32[count] doc-id gaps | u32[count] tf
#   f64[n_docs] document lengths of the stored weights
#   u8 has_tdv [f64[n_terms] tdv]
# A string list is u32 count followed by (u32 byte length, utf-8 bytes) each.

MAGIC = b"TDVI"
FORMAT_VERSION = 1


def _pack_strings(out: list[bytes], items: Sequence[str]) -> None:
    out.append(struct.pack("<I", len(items)))
    for s in items:
        b = s.encode("utf-8")
        out.append(struct.pack("<I", len(b)))
        out.append(b)


def dumps_index(index: SparseIndex | WeightedIndex) -> bytes:
    weighted = isinstance(index, WeightedIndex)
    out: list[bytes] = [
        MAGIC,
        struct.pack("<IBBQ", FORMAT_VERSION, int(weighted), int(weighted and index.pruned),
                    (index.entries_before_prune or 0) if weighted else 0),
    ]
    _pack_strings(out, index.vocab.terms)
    _pack_strings(out, index.docnos)
    out.append(struct.pack("<B", index.surface_forms is not None))
    if index.surface_forms is not None:
        _pack_strings(out, index.surface_forms)
    cfg = index.preprocess
    out.append(struct.pack("<B", cfg is not None))
    if cfg is not None:
        out.append(struct.pack("<B", cfg.lowercase))
        _pack_strings(out, [cfg.stemmer])
        _pack_strings(out, sorted(cfg.stopwords))

    tf = index.tf if weighted else index.data
    lengths = np.diff(index.indptr)
    nonempty = np.flatnonzero(lengths)
    out.append(struct.pack("<I", len(nonempty)))
    for t in nonempty:
        lo, hi = index.indptr[t], index.indptr[t + 1]
        docs = index.indices[lo:hi]
        gaps = np.diff(docs, prepend=0)
        out.append(struct.pack("<II", t, hi - lo))
        out.append(gaps.astype("<u4").tobytes())
        out.append(tf[lo:hi].astype("<u4").tobytes())
    out.append(index.doc_len.astype("<f8").tobytes())
    out.append(struct.pack("<B", weighted))
    if weighted:
        out.append(index.tdv.astype("<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise IndexFormatError(f"truncated index file at byte {self.pos} (need {n} more bytes)")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(itemsize * count), dtype=dtype)

    def strings(self) -> list[str]:
        (n,) = self.unpack("<I")
        items = []
        for _ in range(n):
            (length,) = self.unpack("<I")
            items.append(self.take(length).decode("utf-8"))
        return items


def loads_index(buf: bytes) -> SparseIndex | WeightedIndex:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise IndexFormatError("not a TDVI index file (bad magic bytes)")
    version, kind, pruned, before = r.unpack("<IBBQ")
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported index format version {version} (expected {FORMAT_VERSION})")
    if kind not in (0, 1):
        raise IndexFormatError(f"unknown index kind {kind}")
    vocab = Vocabulary(r.strings())
    docnos = r.strings()
    (has_surface,) = r.unpack("<B")
    surface = r.strings() if has_surface else None
    (has_cfg,) = r.unpack("<B")
    cfg = None
    if has_cfg:
        (lowercase,) = r.unpack("<B")
        (stemmer,) = r.strings()
        cfg = PreprocessConfig(frozenset(r.strings()), stemmer, bool(lowercase))

    (n_lists,) = r.unpack("<I")
    counts = np.zeros(len(vocab), dtype=np.int64)
    docs_parts, tf_parts = {}, {}
    for _ in range(n_lists):
        t, n = r.unpack("<II")
        if t >= len(vocab):
            raise IndexFormatError(f"posting list for unknown term id {t}")
        gaps = r.array("<u4", n).astype(np.int64)
        docs_parts[t] = np.cumsum(gaps)
        tf_parts[t] = r.array("<u4", n).astype(np.float64)
        counts[t] = n
    order = sorted(docs_parts)
    indices = np.concatenate([docs_parts[t] for t in order]) if order else np.zeros(0, np.int64)
    tf = np.concatenate([tf_parts[t] for t in order]) if order else np.zeros(0)
    indptr = np.zeros(len(vocab) + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    if len(indices) and indices.max() >= len(docnos):
        raise IndexFormatError("posting refers to a doc id beyond the document table")
    doc_len = r.array("<f8", len(docnos))
    (has_tdv,) = r.unpack("<B")
    tdv = r.array("<f8", len(vocab)).copy() if has_tdv else None
    if r.pos != len(buf):
        raise IndexFormatError(f"{len(buf) - r.pos} trailing bytes after index data")

    if kind == 1:
        if tdv is None:
            raise IndexFormatError("weighted index without a tdv section")
        index = WeightedIndex(
            vocab, docnos, indptr, indices, tf, tdv,
            entries_before_prune=int(before) if pruned else None,
            surface_forms=surface, preprocess=cfg,
        )
    else:
        index = SparseIndex(vocab, docnos, indptr, indices, tf, surface_forms=surface, preprocess=cfg)
    if not np.array_equal(index.doc_len, doc_len):
        raise IndexFormatError("stored document lengths disagree with postings (corrupt file)")
    return index


def save_index(index: SparseIndex | WeightedIndex, path_or_stream) -> int:
    """Write ``index``; returns the number of bytes written."""
    buf = dumps_index(index)
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(buf)
    else:
        with open(path_or_stream, "wb") as fh:
            fh.write(buf)
    return len(buf)


def load_index(path_or_stream: str | BinaryIO) -> SparseIndex | WeightedIndex:
    if hasattr(path_or_stream, "read"):
        return loads_index(path_or_stream.read())
    with open(path_or_stream, "rb") as fh:
        return loads_index(fh.read())
