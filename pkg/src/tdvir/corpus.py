"""TREC ingestion (documents, topics, qrels) and text normalization."""

from __future__ import annotations

import io
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import BinaryIO, Iterable, TextIO

from nltk.stem.porter import PorterStemmer

__all__ = [
    "RawDoc",
    "Topic",
    "Qrels",
    "PreprocessConfig",
    "TrecParseError",
    "TopicParseWarning",
    "parse_trec_documents",
    "parse_trec_topics",
    "parse_qrels",
    "write_qrels",
    "preprocess",
    "preprocess_with_surface",
    "load_stopwords",
    "default_stopwords",
    "SurfaceForms",
]

# (qid, docno) -> grade, stored as qid -> {docno: grade} like trec_eval tooling
Qrels = dict[str, dict[str, int]]

DEFAULT_TEXT_FIELDS = ("HEAD", "HEADLINE", "HL", "TITLE", "LEADPARA", "LP", "TEXT")


class TrecParseError(ValueError):
    """Malformed TREC input. ``offset`` is a byte offset, ``line`` a 1-based line."""

    def __init__(self, message: str, *, offset: int | None = None, line: int | None = None):
        where = []
        if offset is not None:
            where.append(f"byte offset {offset}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.line = line


class TopicParseWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RawDoc:
    docno: str
    text: str


@dataclass(frozen=True)
class Topic:
    qid: str
    title: str


@dataclass(frozen=True)
class PreprocessConfig:
    """Tokenizer pipeline settings.

    Tokens are lowercased, then filtered against ``stopwords``, then stemmed.
    """

    stopwords: frozenset[str] = field(default_factory=frozenset)
    stemmer: str = "porter"
    lowercase: bool = True

    def __post_init__(self):
        if self.stemmer not in ("porter", "none"):
            raise ValueError(f"unknown stemmer {self.stemmer!r}; expected 'porter' or 'none'")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    @classmethod
    def english(cls, stemmer: str = "porter") -> "PreprocessConfig":
        return cls(stopwords=default_stopwords(), stemmer=stemmer, lowercase=True)


def _read_bytes(stream: BinaryIO | TextIO | bytes | str) -> bytes:
    if isinstance(stream, bytes):
        return stream
    if isinstance(stream, str):
        return stream.encode("utf-8")
    data = stream.read()
    return data.encode("utf-8") if isinstance(data, str) else data


def _read_text(stream: BinaryIO | TextIO | bytes | str) -> str:
    if isinstance(stream, str):
        return stream
    if isinstance(stream, bytes):
        return stream.decode("utf-8", errors="replace")
    data = stream.read()
    return data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data


_DOC_RE = re.compile(rb"<DOC>(.*?)</DOC>", re.DOTALL | re.IGNORECASE)
_DOCNO_RE = re.compile(rb"<DOCNO>(.*?)</DOCNO>", re.DOTALL | re.IGNORECASE)
_TAG_RE = re.compile(r"<[^>]*>")
_WS_RE = re.compile(r"\s+")


def parse_trec_documents(
    stream: BinaryIO | bytes | str,
    text_fields: Iterable[str] = DEFAULT_TEXT_FIELDS,
) -> list[RawDoc]:
    """Parse concatenated ``<DOC>`` records.

    The text of a document is the content of every field named in
    ``text_fields``, in file order, joined by newlines. Markup nested inside
    a field (e.g. ``<P>``) is dropped.
    """
    data = _read_bytes(stream)
    names = "|".join(re.escape(f) for f in text_fields)
    field_re = re.compile(rf"<({names})(?:\s[^>]*)?>(.*?)</\1>".encode(), re.DOTALL | re.IGNORECASE)

    docs = []
    pos = 0
    for m in _DOC_RE.finditer(data):
        if data[pos:m.start()].strip():
            stray = pos + len(data[pos:m.start()]) - len(data[pos:m.start()].lstrip())
            raise TrecParseError("content outside <DOC> block", offset=stray)
        pos = m.end()
        body = m.group(1)
        no = _DOCNO_RE.search(body)
        if no is None:
            raise TrecParseError("<DOC> block without <DOCNO>", offset=m.start())
        docno = no.group(1).decode("utf-8", errors="replace").strip()
        if not docno:
            raise TrecParseError("empty <DOCNO>", offset=m.start() + no.start())
        parts = []
        for f in field_re.finditer(body):
            content = f.group(2).decode("utf-8", errors="replace")
            parts.append(_TAG_RE.sub(" ", content).strip())
        docs.append(RawDoc(docno, "\n".join(parts)))
    tail = data[pos:]
    if tail.strip():
        opened = tail.upper().find(b"<DOC>")
        offset = pos + (opened if opened >= 0 else len(tail) - len(tail.lstrip()))
        raise TrecParseError("unterminated or stray content after last </DOC>", offset=offset)
    return docs


_TOP_RE = re.compile(r"<top>(.*?)</top>", re.DOTALL | re.IGNORECASE)
_NUM_RE = re.compile(r"<num>\s*(?:Number:)?\s*([^<]*)", re.IGNORECASE)
_TITLE_RE = re.compile(r"<title>\s*(?:Topic:)?\s*([^<]*)", re.IGNORECASE)


def parse_trec_topics(stream: TextIO | BinaryIO | bytes | str) -> list[Topic]:
    """Parse ``<top>`` blocks, keeping the title as query text.

    Blocks without a usable number or title are skipped with a
    :class:`TopicParseWarning`; the remaining topics are still returned.
    """
    text = _read_text(stream)
    topics = []
    for i, m in enumerate(_TOP_RE.finditer(text)):
        block = m.group(1)
        num = _NUM_RE.search(block)
        digits = re.search(r"\d+", num.group(1)) if num else None
        if digits is None:
            warnings.warn(f"topic block {i} has no <num>; skipped", TopicParseWarning, stacklevel=2)
            continue
        qid = digits.group(0).lstrip("0") or "0"
        title = _TITLE_RE.search(block)
        title_text = _WS_RE.sub(" ", title.group(1)).strip() if title else ""
        if not title_text:
            warnings.warn(f"topic {qid} has no <title>; skipped", TopicParseWarning, stacklevel=2)
            continue
        topics.append(Topic(qid, title_text))
    return topics


def parse_qrels(stream: TextIO | BinaryIO | bytes | str) -> Qrels:
    """Read 4-column qrels ``qid iter docno rel``. Later duplicates win."""
    qrels: Qrels = {}
    for lineno, line in enumerate(io.StringIO(_read_text(stream)), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise TrecParseError(f"expected 4 columns, got {len(parts)}", line=lineno)
        qid, _, docno, rel = parts
        try:
            grade = int(rel)
        except ValueError:
            raise TrecParseError(f"non-integer relevance {rel!r}", line=lineno) from None
        if grade < 0:
            # negative judgments (e.g. -1 "spam") carry no gain
            grade = 0
        qrels.setdefault(qid, {})[docno] = grade
    return qrels


def write_qrels(qrels: Qrels, stream: TextIO) -> None:
    for qid, judged in qrels.items():
        for docno, grade in judged.items():
            stream.write(f"{qid} 0 {docno} {grade}\n")


def load_stopwords(source: str | Path | TextIO) -> frozenset[str]:
    """One token per line; blank lines and ``#`` comments are ignored."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.add(line.lower())
    return frozenset(words)


def default_stopwords() -> frozenset[str]:
    with resources.files("tdvir").joinpath("data/stopwords_en.txt").open(encoding="utf-8") as fh:
        return load_stopwords(fh)


_TOKEN_RE = re.compile(r"[^\W_]+")
_stemmer = PorterStemmer()


def _stem(token: str, cfg: PreprocessConfig) -> str:
    return _stemmer.stem(token, to_lowercase=False) if cfg.stemmer == "porter" else token


def preprocess_with_surface(text: str, cfg: PreprocessConfig) -> list[tuple[str, str]]:
    """Like :func:`preprocess` but pairs each index term with its pre-stem form."""
    out = []
    for tok in _TOKEN_RE.findall(text):
        if cfg.lowercase:
            tok = tok.lower()
        if tok.lower() in cfg.stopwords:
            continue
        out.append((_stem(tok, cfg), tok))
    return out


def preprocess(text: str, cfg: PreprocessConfig) -> list[str]:
    """Split on non-alphanumerics, lowercase, drop stop-words, stem."""
    return [term for term, _ in preprocess_with_surface(text, cfg)]


class SurfaceForms:
    """Counts surface forms per index term to map stems back to words."""

    def __init__(self):
        self._counts: dict[str, Counter] = {}

    def update(self, pairs: Iterable[tuple[str, str]]) -> None:
        for term, surface in pairs:
            self._counts.setdefault(term, Counter())[surface] += 1

    def most_common(self) -> dict[str, str]:
        # ties broken lexicographically for determinism
        return {
            term: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0]
            for term, c in self._counts.items()
        }
