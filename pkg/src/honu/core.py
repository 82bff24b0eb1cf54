"""Linear and quadratic neural units (LNU / QNU).

Both units are polynomial in their input vector ``x`` whose first entry is the
constant bias ``x[0] == 1``:

* LNU: ``y = w . x``
* QNU: ``y = sum_{i <= j} w_ij x_i x_j = rowx . colW``

For the QNU only the upper-triangular pairs ``i <= j`` are stored, in
row-major order ``(0,0), (0,1), ..., (0,n), (1,1), ..., (n,n)``. The symmetric
coefficient of a full double sum is absorbed into the single stored weight.

Dynamic regressors are laid out as::

    [1, y(k-1), ..., y(k-n_y), u(k-1), ..., u(k-n_u)]

with the most recent lag first inside each block.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "RegressorLayout",
    "LinearUnit",
    "QuadraticUnit",
    "NeuralUnit",
    "n_quadratic_terms",
    "pair_index",
    "index_pairs",
    "build_regressor",
    "quadratic_expand",
    "lnu_predict",
    "qnu_predict",
    "predict",
    "features",
    "input_derivative",
    "make_unit",
]


def n_quadratic_terms(n_inputs: int) -> int:
    """Number of stored QNU weights for an input vector of length ``n_inputs``."""
    return n_inputs * (n_inputs + 1) // 2


def pair_index(i: int, j: int, n_inputs: int) -> int:
    """Flat position of the pair ``(i, j)`` (order-insensitive) in ``rowx``."""
    if i > j:
        i, j = j, i
    if not 0 <= i <= j < n_inputs:
        raise ConfigurationError(f"pair ({i}, {j}) out of range for {n_inputs} inputs")
    return i * n_inputs - i * (i - 1) // 2 + (j - i)


@lru_cache(maxsize=64)
def _triu(n_inputs: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.triu_indices(n_inputs)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def index_pairs(n_inputs: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices ``(i, j)`` of every flat QNU position."""
    return _triu(n_inputs)


@dataclass(frozen=True)
class RegressorLayout:
    """Lag structure of a dynamic regressor (or of a controller's xi vector)."""

    n_y: int
    n_u: int

    def __post_init__(self):
        if self.n_y < 0 or self.n_u < 0:
            raise ConfigurationError(f"lag counts must be non-negative, got {self}")

    @property
    def size(self) -> int:
        return 1 + self.n_y + self.n_u

    @property
    def start(self) -> int:
        """First sample index at which every lag is defined."""
        return max(self.n_y, self.n_u)

    @property
    def newest_input(self) -> int:
        """Position of ``u(k-1)`` inside the regressor."""
        if self.n_u == 0:
            raise ConfigurationError("layout has no input lags")
        return 1 + self.n_y


def _as_weights(weights) -> np.ndarray:
    w = np.array(weights, dtype=float, copy=True).reshape(-1)
    if not np.all(np.isfinite(w)):
        raise ConfigurationError("weights must be finite")
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class LinearUnit:
    """LNU with weight vector ``w`` (length equals the regressor length)."""

    weights: np.ndarray

    kind = "lnu"

    def __post_init__(self):
        object.__setattr__(self, "weights", _as_weights(self.weights))

    @classmethod
    def zeros(cls, n_inputs: int) -> "LinearUnit":
        return cls(np.zeros(n_inputs))

    @property
    def n_inputs(self) -> int:
        return self.weights.size

    def with_weights(self, weights) -> "LinearUnit":
        return LinearUnit(weights)

    def __call__(self, x) -> float:
        return lnu_predict(self, x)


@dataclass(frozen=True, eq=False)
class QuadraticUnit:
    """QNU with long weight vector ``colW`` over the upper-triangular pairs."""

    weights: np.ndarray

    kind = "qnu"

    def __post_init__(self):
        w = _as_weights(self.weights)
        m = w.size
        n = int(round((np.sqrt(8 * m + 1) - 1) / 2))
        if n < 1 or n_quadratic_terms(n) != m:
            raise ConfigurationError(f"{m} is not a valid QNU weight count (n(n+1)/2)")
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, n_inputs: int) -> "QuadraticUnit":
        return cls(np.zeros(n_quadratic_terms(n_inputs)))

    @property
    def n_inputs(self) -> int:
        m = self.weights.size
        return int(round((np.sqrt(8 * m + 1) - 1) / 2))

    def with_weights(self, weights) -> "QuadraticUnit":
        return QuadraticUnit(weights)

    def __call__(self, x) -> float:
        return qnu_predict(self, x)


NeuralUnit = Union[LinearUnit, QuadraticUnit]


def make_unit(kind: str, n_inputs: int) -> NeuralUnit:
    """Zero-initialised unit of the given kind (``"lnu"`` or ``"qnu"``)."""
    kind = kind.lower()
    if kind in ("lnu", "dlnu"):
        return LinearUnit.zeros(n_inputs)
    if kind in ("qnu", "dqnu"):
        return QuadraticUnit.zeros(n_inputs)
    raise ConfigurationError(f"unknown unit kind {kind!r}")


def build_regressor(model_outputs, plant_inputs, k: int, n_y: int, n_u: int) -> np.ndarray:
    """Regressor ``[1, y(k-1)..y(k-n_y), u(k-1)..u(k-n_u)]`` at sample ``k``.

    Raises ``ConfigurationError`` if ``k`` is too small for the requested lag
    depths; training has to start at ``max(n_y, n_u)``.
    """
    if k < max(n_y, n_u) or k < 0:
        raise ConfigurationError(
            f"sample {k} has insufficient history for n_y={n_y}, n_u={n_u}; "
            f"start at k={max(n_y, n_u)}"
        )
    y = np.asarray(model_outputs, dtype=float)
    u = np.asarray(plant_inputs, dtype=float)
    x = np.empty(1 + n_y + n_u)
    x[0] = 1.0
    for i in range(n_y):
        x[1 + i] = y[k - 1 - i]
    for i in range(n_u):
        x[1 + n_y + i] = u[k - 1 - i]
    return x


def quadratic_expand(x) -> np.ndarray:
    """All products ``x_i * x_j`` with ``i <= j`` in canonical order."""
    x = np.asarray(x, dtype=float).reshape(-1)
    rows, cols = _triu(x.size)
    return x[rows] * x[cols]


def _check_dim(expected: int, got: int, what: str):
    if expected != got:
        raise ConfigurationError(f"{what}: expected {expected} entries, got {got}")


def lnu_predict(unit: LinearUnit, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_dim(unit.weights.size, x.size, "LNU regressor")
    return float(unit.weights @ x)


def qnu_predict(unit: QuadraticUnit, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_dim(unit.weights.size, n_quadratic_terms(x.size), "QNU regressor")
    return float(quadratic_expand(x) @ unit.weights)


def predict(unit: NeuralUnit, x) -> float:
    if isinstance(unit, QuadraticUnit):
        return qnu_predict(unit, x)
    return lnu_predict(unit, x)


def features(unit: NeuralUnit, x) -> np.ndarray:
    """The vector the unit output is linear in: ``x`` (LNU) or ``colx`` (QNU).

    This is also the exact gradient of the output with respect to the weights.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if isinstance(unit, QuadraticUnit):
        return quadratic_expand(x)
    return x.copy()


def input_derivative(unit: NeuralUnit, x, m: int) -> float:
    """Partial derivative of the unit output with respect to input ``x[m]``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if not isinstance(unit, QuadraticUnit):
        _check_dim(unit.weights.size, x.size, "LNU regressor")
        return float(unit.weights[m])
    n = x.size
    _check_dim(unit.weights.size, n_quadratic_terms(n), "QNU regressor")
    w = unit.weights
    total = 0.0
    for i in range(n):
        wim = w[pair_index(i, m, n)]
        # the diagonal pair contributes 2 * w_mm * x_m
        total += wim * x[i] * (2.0 if i == m else 1.0)
    return float(total)
