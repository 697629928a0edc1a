import json

import numpy as np
import pytest

from tdvir.bench import BenchReport, compare_report, index_footprint, time_retrieval
from tdvir.datasets import make_random_corpus
from tdvir.index import Bow, apply_tdv, build_index, dumps_index, prune


@pytest.fixture(scope="module")
def indexes():
    vocab, index = build_index(make_random_corpus(200, 50, seed=0))
    tdv = np.where(np.arange(len(vocab)) % 2 == 0, 0.0, 1.0)
    weighted = apply_tdv(index, tdv)
    queries = {str(i): Bow.from_counts({i: 1, (i + 1) % 50: 1}) for i in range(20)}
    return weighted, prune(weighted)[0], queries


def test_footprint_counts_entries_and_bytes(indexes):
    weighted, pruned, _ = indexes
    e, b = index_footprint(pruned)
    assert e == pruned.entry_count and b == len(dumps_index(pruned))
    assert index_footprint(weighted)[0] > e


def test_time_retrieval_report(indexes):
    weighted, _, queries = indexes
    r = time_retrieval(weighted, "bm25", queries, k=10, repeats=3, warmup=1)
    assert r.repeats == 3 and r.queries == 20 and r.mean_ms > 0 and r.std_ms >= 0
    assert json.loads(r.to_json())["ranker"] == "bm25"
    assert "mean ms/query" in r.table()


def test_time_retrieval_needs_repeats(indexes):
    weighted, _, queries = indexes
    with pytest.raises(ValueError):
        time_retrieval(weighted, "bm25", queries, repeats=2)
    with pytest.raises(ValueError):
        time_retrieval(weighted, "bm25", queries, warmup=0)
    with pytest.raises(ValueError):
        time_retrieval(weighted, "bm25", {})


def test_compare_report_signs():
    before = BenchReport("bm25", 10.0, 1.0, 3, 5, 5, 1000)
    after = BenchReport("bm25", 4.0, 0.5, 3, 5, 3, 800)
    c = compare_report(before, after)
    assert c.entries_change_percent == pytest.approx(-40.0)
    assert c.time_change_percent == pytest.approx(-60.0)
    assert c.bytes_change_percent == pytest.approx(-20.0)
    assert "entries change %  -40.00" in c.table()
