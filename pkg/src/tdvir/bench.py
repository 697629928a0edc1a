"""Retrieval latency and index footprint, before and after pruning."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .index import Bow, _BaseIndex, dumps_index
from .ranking import RankerParams, ranker_stats, retrieve

__all__ = ["BenchReport", "time_retrieval", "index_footprint", "compare_report"]


@dataclass
class BenchReport:
    ranker: str
    mean_ms: float
    std_ms: float
    repeats: int
    queries: int
    entries: int
    bytes: int
    time_change_percent: float | None = None
    entries_change_percent: float | None = None
    bytes_change_percent: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def table(self) -> str:
        rows = [
            ("ranker", self.ranker),
            ("queries", str(self.queries)),
            ("repeats", str(self.repeats)),
            ("mean ms/query", f"{self.mean_ms:.4f}"),
            ("std ms/query", f"{self.std_ms:.4f}"),
            ("posting entries", str(self.entries)),
            ("serialized bytes", str(self.bytes)),
        ]
        for label, value in (
            ("time change %", self.time_change_percent),
            ("entries change %", self.entries_change_percent),
            ("bytes change %", self.bytes_change_percent),
        ):
            if value is not None:
                rows.append((label, f"{value:+.2f}"))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def index_footprint(index: _BaseIndex) -> tuple[int, int]:
    """(posting entries, serialized size in bytes)."""
    return index.entry_count, len(dumps_index(index))


def time_retrieval(
    index: _BaseIndex,
    ranker: str,
    queries: Mapping[str, Bow],
    *,
    k: int = 1000,
    repeats: int = 3,
    warmup: int = 1,
    params: RankerParams = RankerParams(),
) -> BenchReport:
    """Wall-clock ms per query, single-threaded.

    ``warmup`` unmeasured passes precede ``repeats`` measured passes over all
    queries; mean and std are taken over the per-pass averages.
    """
    if not queries:
        raise ValueError("no queries to time")
    if repeats < 3 or warmup < 1:
        raise ValueError("need repeats >= 3 and warmup >= 1")
    stats = ranker_stats(index, ranker)
    items = list(queries.items())

    def one_pass() -> float:
        start = time.perf_counter()
        for qid, q in items:
            retrieve(index, ranker, stats, q, k, qid=qid, params=params)
        return (time.perf_counter() - start) * 1000.0 / len(items)

    for _ in range(warmup):
        one_pass()
    passes = np.array([one_pass() for _ in range(repeats)])
    entries, size = index_footprint(index)
    return BenchReport(ranker, float(passes.mean()), float(passes.std(ddof=1)), repeats, len(items), entries, size)


def _change(before: float, after: float) -> float:
    if before == 0:
        return 0.0
    return (after / before - 1.0) * 100.0


def compare_report(before: BenchReport, after: BenchReport) -> BenchReport:
    """``after`` annotated with percent changes relative to ``before`` (negative = smaller)."""
    return BenchReport(
        after.ranker, after.mean_ms, after.std_ms, after.repeats, after.queries, after.entries, after.bytes,
        time_change_percent=_change(before.mean_ms, after.mean_ms),
        entries_change_percent=_change(before.entries, after.entries),
        bytes_change_percent=_change(before.bytes, after.bytes),
    )
