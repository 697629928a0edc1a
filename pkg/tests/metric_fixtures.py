"""Five fixed nDCG@5 / Recall@1000 cases with hand-computed answers."""

import math

from tdvir.ranking import RankedList

L3 = math.log2(3)

# (name, ranked docnos, judgments, nDCG@5, Recall@1000)
FIXTURES = [
    # relevant at ranks 1 and 3, one more relevant never retrieved
    ("two_of_three", ["a", "x", "b", "y", "z"], {"a": 1, "b": 1, "c": 1}, 1.5 / (1 + 1 / L3 + 0.5), 2 / 3),
    ("ideal_order", ["a", "b", "x"], {"a": 2, "b": 1, "x": 0}, 1.0, 1.0),
    ("graded_swap", ["x", "a", "b"], {"a": 2, "b": 1}, (2 / L3 + 1 / 2) / (2 + 1 / L3), 1.0),
    ("nothing_found", ["x", "y"], {"a": 1, "b": 3}, 0.0, 0.0),
    ("beyond_cutoff", ["p", "q", "r", "s", "t", "a"], {"a": 1}, 0.0, 1.0),
]


def run_of(name, docnos):
    return RankedList(name, tuple(docnos), tuple(float(-i) for i in range(len(docnos))))
