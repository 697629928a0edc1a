"""One-layer ReLU network mapping a term embedding to its discrimination value."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .embeddings import EmbeddingMatrix

__all__ = ["TdvParams", "init_params", "tdv_forward", "save_model", "load_model", "ModelFormatError"]


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TdvParams:
    w: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64, copy=True)
        if w.ndim != 1:
            raise ValueError("w must be a vector")
        if not (np.all(np.isfinite(w)) and math.isfinite(self.bias)):
            raise ValueError("parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return len(self.w)

    def __eq__(self, other) -> bool:
        return isinstance(other, TdvParams) and self.bias == other.bias and np.array_equal(self.w, other.w)

    __hash__ = None


def init_params(dim: int, seed: int = 0) -> TdvParams:
    """Glorot-uniform weights for a single-output layer; bias starts at 1.

    A unit bias makes every TDV positive at the start of training.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    bound = math.sqrt(6.0 / (dim + 1))
    rng = np.random.default_rng(seed)
    return TdvParams(rng.uniform(-bound, bound, size=dim), 1.0)


def tdv_forward(emb: EmbeddingMatrix | np.ndarray, params: TdvParams) -> np.ndarray:
    """``max(0, E @ w + bias)`` for every vocabulary row of ``E``."""
    matrix = emb.matrix if isinstance(emb, EmbeddingMatrix) else np.asarray(emb)
    if matrix.shape[1] != params.dim:
        raise ValueError(f"embedding dim {matrix.shape[1]} != parameter dim {params.dim}")
    return np.maximum(matrix @ params.w + params.bias, 0.0)


# Text model file, one item per line:
#   # tdvir model v1
#   dim <int>
#   seed <int>
#   bias <float>
#   w <dim floats>
#   tdv <count>
#   <term>\t<float>        (count lines, vocabulary order)
# Floats use repr(), which round-trips doubles exactly.

_HEADER = "# tdvir model v1"


def save_model(
    stream: TextIO,
    params: TdvParams,
    *,
    seed: int = 0,
    terms: Sequence[str] = (),
    tdv: np.ndarray | None = None,
) -> None:
    stream.write(_HEADER + "\n")
    stream.write(f"dim {params.dim}\n")
    stream.write(f"seed {seed}\n")
    stream.write(f"bias {params.bias!r}\n")
    stream.write("w " + " ".join(repr(float(x)) for x in params.w) + "\n")
    tdv = np.zeros(0) if tdv is None else np.asarray(tdv)
    if len(tdv) != len(terms):
        raise ValueError("tdv snapshot and term list differ in length")
    stream.write(f"tdv {len(tdv)}\n")
    for term, value in zip(terms, tdv):
        stream.write(f"{term}\t{float(value)!r}\n")


def load_model(stream: TextIO) -> tuple[TdvParams, int, list[str], np.ndarray]:
    """Returns ``(params, seed, terms, tdv)``."""
    lines = stream.read().split("\n")
    if not lines or lines[0].strip() != _HEADER:
        raise ModelFormatError("missing model header")

    def field(i: int, name: str) -> str:
        if i >= len(lines) or not lines[i].startswith(name + " "):
            raise ModelFormatError(f"line {i + 1}: expected '{name}'")
        return lines[i][len(name) + 1:]

    try:
        dim = int(field(1, "dim"))
        seed = int(field(2, "seed"))
        bias = float(field(3, "bias"))
        w = np.array([float(x) for x in field(4, "w").split()])
        count = int(field(5, "tdv"))
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None
    if len(w) != dim:
        raise ModelFormatError(f"w has {len(w)} values, header says {dim}")
    terms, values = [], []
    for i in range(6, 6 + count):
        if i >= len(lines) or "\t" not in lines[i]:
            raise ModelFormatError(f"line {i + 1}: truncated tdv table")
        term, value = lines[i].rsplit("\t", 1)
        terms.append(term)
        values.append(float(value))
    return TdvParams(w, bias), seed, terms, np.array(values)
