import logging

import numpy as np
import pytest

from tdvir.embeddings import EmbeddingFormatError, align, load_vectors
from tdvir.index import Vocabulary

VEC = "3 2\nrun 0.5 -1\ndogs 1e-3 2\nthe 0 0\n"


def test_load_vectors_parses_header_and_rows():
    t = load_vectors(VEC)
    assert t.dim == 2 and len(t) == 3
    np.testing.assert_array_equal(t["dogs"], [0.001, 2.0])


def test_duplicate_words_keep_last(caplog):
    with caplog.at_level(logging.WARNING, logger="tdvir.embeddings"):
        t = load_vectors("2 1\na 1\na 2\n")
    assert t["a"][0] == 2.0 and t.duplicates == 1
    assert "duplicate" in caplog.text


@pytest.mark.parametrize("text,line", [("3\n", 1), ("1 2\na 1\n", 2), ("1 2\na 1 x\n", 2), ("2 1\na 1\nb 1 2\n", 3)])
def test_format_errors_report_line(text, line):
    with pytest.raises(EmbeddingFormatError) as err:
        load_vectors(text)
    assert err.value.line == line


def test_align_exact_then_surface_then_zero():
    vocab = Vocabulary(["dog", "run", "zebra"])
    t = load_vectors(VEC)
    m = align(vocab, t, surface_forms=["dogs", "", ""])
    np.testing.assert_array_equal(m.matrix, [[0.001, 2], [0.5, -1], [0, 0]])
    assert m.oov_ids == {2}
    with pytest.raises(ValueError):
        m.matrix[0, 0] = 1.0


def test_hash_uniform_is_deterministic_and_bounded():
    vocab = Vocabulary(["alpha", "beta"])
    t = load_vectors("0 4\n")
    a = align(vocab, t, "hash_uniform", scale=0.1, seed=3)
    b = align(vocab, t, "hash_uniform", scale=0.1, seed=3)
    c = align(vocab, t, "hash_uniform", scale=0.1, seed=4)
    np.testing.assert_array_equal(a.matrix, b.matrix)
    assert not np.array_equal(a.matrix, c.matrix)
    assert np.all(np.abs(a.matrix) <= 0.1) and not np.array_equal(a.matrix[0], a.matrix[1])


def test_unknown_policy():
    with pytest.raises(ValueError):
        align(Vocabulary(["a"]), load_vectors("0 1\n"), "mean")
