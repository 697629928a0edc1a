import io
import math

import numpy as np
import pytest

from tdvir.tdvmodel import ModelFormatError, TdvParams, init_params, load_model, save_model, tdv_forward


def test_forward_is_relu_of_affine():
    E = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    p = TdvParams(np.array([2.0, -3.0]), 0.5)
    np.testing.assert_array_equal(tdv_forward(E, p), [2.5, 0.0, 0.0])


def test_identity_start():
    E = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_array_equal(tdv_forward(E, TdvParams(np.zeros(3), 1.0)), np.ones(5))


def test_init_params_bounds_and_determinism():
    p = init_params(16, seed=7)
    assert p.bias == 1.0
    assert np.all(np.abs(p.w) <= math.sqrt(6 / 17))
    assert p == init_params(16, seed=7) and p != init_params(16, seed=8)


def test_params_validation():
    with pytest.raises(ValueError):
        TdvParams(np.array([np.nan]), 0.0)
    with pytest.raises(ValueError):
        TdvParams(np.zeros((2, 2)), 0.0)
    with pytest.raises(ValueError):
        tdv_forward(np.zeros((3, 4)), TdvParams(np.zeros(3), 1.0))


def test_model_round_trip_is_exact():
    rng = np.random.default_rng(1)
    p = TdvParams(rng.normal(size=6) / 3, 1 / 3)
    terms = ["a", "b b", "ünï"]
    tdv = np.array([0.1 + 0.2, 0.0, 1e-300])
    buf = io.StringIO()
    save_model(buf, p, seed=42, terms=terms, tdv=tdv)
    text = buf.getvalue()
    back, seed, t2, tdv2 = load_model(io.StringIO(text))
    assert back == p and seed == 42 and t2 == terms
    assert tdv2.tobytes() == tdv.tobytes()
    out = io.StringIO()
    save_model(out, back, seed=seed, terms=t2, tdv=tdv2)
    assert out.getvalue() == text


@pytest.mark.parametrize("text", ["", "# other\n", "# tdvir model v1\ndim 2\nseed 0\nbias 1\nw 1\ntdv 0\n",
                                  "# tdvir model v1\ndim 1\nseed 0\nbias 1\nw 1\ntdv 2\na\t1\n"])
def test_bad_model_files(text):
    with pytest.raises(ModelFormatError):
        load_model(io.StringIO(text))
