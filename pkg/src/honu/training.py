"""Weight adaptation for LNU/QNU models.

Two regimes are provided:

* ``"rtrl"`` - sample-by-sample gradient descent, optionally with the
  normalised rate ``mu / (f.f + 1)`` where ``f`` is ``x`` (LNU) or ``colx``
  (QNU).
* ``"bptt"`` - one Levenberg-Marquardt step per epoch,
  ``dw = (J^T J + I/mu)^-1 J^T e``, with the raw ``mu``.

In both regimes the gradient of the output with respect to the weights is
taken as the instantaneous feature vector (``x`` or ``colx``); sensitivity of
fed-back model outputs to past weights is not propagated.

The per-step functions (``rtrl_step_lnu`` and friends) are the reference
implementation. Whole-epoch sweeps run in numba kernels that repeat the same
arithmetic; the test-suite checks the two agree.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List

import numba
import numpy as np
from scipy import linalg

from .core import LinearUnit, NeuralUnit, QuadraticUnit, RegressorLayout, index_pairs, features, predict
from .errors import ConfigurationError, DivergenceError
from .series import TimeSeries

__all__ = [
    "LearningConfig",
    "TrainingReport",
    "normalized_rate",
    "rtrl_step",
    "rtrl_step_lnu",
    "rtrl_step_qnu",
    "bptt_lm_update",
    "train_epochs",
    "finite_difference_gradient",
    "sweep_arrays",
]

METHODS = ("rtrl", "bptt")


@dataclass(frozen=True)
class LearningConfig:
    """Learning hyper-parameters.

    ``series_parallel`` feeds measured outputs instead of model outputs into
    the regressor during training; the default is the free-running
    (parallel) model.
    """

    mu: float
    epochs: int = 10
    normalize: bool = True
    n_y: int = 0
    n_u: int = 1
    series_parallel: bool = False

    def __post_init__(self):
        if not (self.mu > 0 and np.isfinite(self.mu)):
            raise ConfigurationError(f"mu must be a positive finite number, got {self.mu}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigurationError(f"epochs must be an integer >= 1, got {self.epochs}")
        RegressorLayout(self.n_y, self.n_u)

    @property
    def layout(self) -> RegressorLayout:
        return RegressorLayout(self.n_y, self.n_u)

    def for_method(self, method: str) -> "LearningConfig":
        """Copy with ``normalize`` forced off for the batch path."""
        if method == "bptt" and self.normalize:
            return LearningConfig(self.mu, self.epochs, False, self.n_y, self.n_u,
                                  self.series_parallel)
        return self


@dataclass
class TrainingReport:
    sse_per_epoch: List[float]
    unit: NeuralUnit
    per_step_seconds: float
    method: str = "rtrl"
    y_model: np.ndarray = field(default=None, repr=False)

    @property
    def epochs(self) -> int:
        return len(self.sse_per_epoch)


def normalized_rate(mu: float, v) -> float:
    """``mu / (v.v + 1)``; ``v`` is the regressor or its quadratic expansion."""
    v = np.asarray(v, dtype=float).reshape(-1)
    return mu / (float(v @ v) + 1.0)


def rtrl_step(unit: NeuralUnit, x, e_k: float, cfg: LearningConfig, sample=None) -> NeuralUnit:
    f = features(unit, x)
    if f.size != unit.weights.size:
        raise ConfigurationError(f"unit has {unit.weights.size} weights, features have {f.size}")
    if e_k == 0:
        return unit
    eta = normalized_rate(cfg.mu, f) if cfg.normalize else cfg.mu
    with np.errstate(over="ignore", invalid="ignore"):
        w = unit.weights + eta * e_k * f
    if not np.all(np.isfinite(w)):
        raise DivergenceError("non-finite weight after gradient step", sample=sample)
    return unit.with_weights(w)


def rtrl_step_lnu(unit: LinearUnit, x, e_k: float, cfg: LearningConfig, sample=None) -> LinearUnit:
    """One gradient step ``w <- w + eta e_k x`` for a linear unit."""
    if not isinstance(unit, LinearUnit):
        raise ConfigurationError("rtrl_step_lnu needs a LinearUnit")
    return rtrl_step(unit, x, e_k, cfg, sample)


def rtrl_step_qnu(unit: QuadraticUnit, x, e_k: float, cfg: LearningConfig, sample=None) -> QuadraticUnit:
    """One gradient step ``colW <- colW + eta e_k colx`` for a quadratic unit."""
    if not isinstance(unit, QuadraticUnit):
        raise ConfigurationError("rtrl_step_qnu needs a QuadraticUnit")
    return rtrl_step(unit, x, e_k, cfg, sample)


def bptt_lm_update(jacobian, errors, mu: float) -> np.ndarray:
    """Solve ``(J^T J + I/mu) dw = J^T e`` for the batch weight change."""
    J = np.atleast_2d(np.asarray(jacobian, dtype=float))
    e = np.asarray(errors, dtype=float).reshape(-1)
    if J.shape[0] != e.size:
        raise ConfigurationError(f"Jacobian has {J.shape[0]} rows but {e.size} errors")
    if not mu > 0:
        raise ConfigurationError("mu must be positive")
    A = J.T @ J
    A[np.diag_indices_from(A)] += 1.0 / mu
    rhs = J.T @ e
    try:
        dw = linalg.solve(A, rhs, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise DivergenceError(f"Levenberg-Marquardt solve failed: {exc}") from exc
    return dw


def finite_difference_gradient(unit: NeuralUnit, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference derivative of the unit output w.r.t. each weight."""
    if not h > 0:
        raise ConfigurationError("h must be positive")
    w = np.array(unit.weights)
    grad = np.empty(w.size)
    for i in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        grad[i] = (predict(unit.with_weights(wp), x) - predict(unit.with_weights(wm), x)) / (2 * h)
    return grad


# --- compiled sweeps -------------------------------------------------------

@numba.njit(cache=True)
def _fill_features(x, rows, cols, quadratic, f):
    if quadratic:
        for p in range(rows.size):
            f[p] = x[rows[p]] * x[cols[p]]
    else:
        for p in range(x.size):
            f[p] = x[p]


@numba.njit(cache=True)
def _fill_regressor(src_y, u, k, n_y, n_u, x):
    x[0] = 1.0
    for i in range(n_y):
        x[1 + i] = src_y[k - 1 - i]
    for i in range(n_u):
        x[1 + n_y + i] = u[k - 1 - i]


@numba.njit(cache=True)
def _rtrl_sweep(u, y_real, w, n_y, n_u, rows, cols, quadratic, mu, normalize,
                series_parallel, y_model):
    """One in-place RTRL epoch. Returns (sse, failing sample or -1)."""
    start = max(n_y, n_u)
    n = y_real.size
    x = np.empty(1 + n_y + n_u)
    f = np.empty(w.size)
    for k in range(min(start, n)):
        y_model[k] = y_real[k]
    sse = 0.0
    for k in range(start, n):
        if series_parallel:
            _fill_regressor(y_real, u, k, n_y, n_u, x)
        else:
            _fill_regressor(y_model, u, k, n_y, n_u, x)
        _fill_features(x, rows, cols, quadratic, f)
        y = 0.0
        for p in range(w.size):
            y += w[p] * f[p]
        y_model[k] = y
        e = y_real[k] - y
        sse += e * e
        eta = mu
        if normalize:
            ff = 0.0
            for p in range(f.size):
                ff += f[p] * f[p]
            eta = mu / (ff + 1.0)
        if not np.isfinite(y):
            return sse, k
        if e == 0.0:
            continue
        ok = True
        for p in range(w.size):
            w[p] += eta * e * f[p]
            if not np.isfinite(w[p]):
                ok = False
        if not ok:
            return sse, k
    return sse, -1


@numba.njit(cache=True)
def _free_run_jacobian(u, y_real, w, n_y, n_u, rows, cols, quadratic, series_parallel,
                       y_model, J):
    """Run with frozen weights, filling outputs and feature rows (from ``start``)."""
    start = max(n_y, n_u)
    n = y_real.size
    x = np.empty(1 + n_y + n_u)
    f = np.empty(w.size)
    for k in range(min(start, n)):
        y_model[k] = y_real[k]
    for k in range(start, n):
        if series_parallel:
            _fill_regressor(y_real, u, k, n_y, n_u, x)
        else:
            _fill_regressor(y_model, u, k, n_y, n_u, x)
        _fill_features(x, rows, cols, quadratic, f)
        y = 0.0
        for p in range(w.size):
            y += w[p] * f[p]
            J[k - start, p] = f[p]
        y_model[k] = y
        if not np.isfinite(y):
            return k
    return -1


def sweep_arrays(unit: NeuralUnit, layout: RegressorLayout):
    """Index arrays used by the compiled kernels for ``unit``'s feature map."""
    quadratic = isinstance(unit, QuadraticUnit)
    if quadratic:
        rows, cols = index_pairs(layout.size)
        expected = rows.size
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        expected = layout.size
    if unit.weights.size != expected:
        raise ConfigurationError(
            f"{unit.kind.upper()} with {unit.weights.size} weights does not match "
            f"n_y={layout.n_y}, n_u={layout.n_u} (needs {expected})"
        )
    return np.ascontiguousarray(rows, dtype=np.int64), np.ascontiguousarray(cols, dtype=np.int64), quadratic


def train_epochs(series: TimeSeries, unit: NeuralUnit, cfg: LearningConfig,
                 method: str = "rtrl") -> TrainingReport:
    """Train ``unit`` on ``series`` for ``cfg.epochs`` chronological sweeps.

    The per-epoch SSE sums ``e(k)^2`` over ``k >= max(n_y, n_u)``. For RTRL
    it is accumulated a priori during the sweep; for BPTT it is the frozen
    weights' sweep error that the Levenberg-Marquardt step then corrects.
    """
    method = method.lower()
    if method not in METHODS:
        raise ConfigurationError(f"method must be one of {METHODS}, got {method!r}")
    cfg = cfg.for_method(method)
    layout = cfg.layout
    if len(series) < layout.start + 2:
        raise ConfigurationError(
            f"series has {len(series)} samples; need at least {layout.start + 2}"
        )
    rows, cols, quadratic = sweep_arrays(unit, layout)
    u, y_real = series.u, series.y_real
    w = np.array(unit.weights, dtype=float)
    y_model = np.empty_like(y_real)
    history: List[float] = []
    n_active = len(series) - layout.start
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        if method == "rtrl":
            sse, bad = _rtrl_sweep(u, y_real, w, layout.n_y, layout.n_u, rows, cols, quadratic,
                                   float(cfg.mu), bool(cfg.normalize), bool(cfg.series_parallel),
                                   y_model)
            if bad >= 0 or not np.isfinite(sse):
                raise DivergenceError("RTRL training diverged", epoch=epoch,
                                      sample=int(bad) if bad >= 0 else None, history=history)
        else:
            J = np.empty((n_active, w.size))
            bad = _free_run_jacobian(u, y_real, w, layout.n_y, layout.n_u, rows, cols, quadratic,
                                     bool(cfg.series_parallel), y_model, J)
            if bad >= 0:
                raise DivergenceError("BPTT forward run diverged", epoch=epoch, sample=int(bad),
                                      history=history)
            e = y_real[layout.start:] - y_model[layout.start:]
            sse = float(e @ e)
            if not np.isfinite(sse):
                raise DivergenceError("BPTT forward run diverged", epoch=epoch, history=history)
            w = w + bptt_lm_update(J, e, cfg.mu)
            if not np.all(np.isfinite(w)):
                raise DivergenceError("non-finite weights after LM step", epoch=epoch,
                                      history=history)
        history.append(float(sse))
    elapsed = time.perf_counter() - t0
    return TrainingReport(
        sse_per_epoch=history,
        unit=unit.with_weights(w),
        per_step_seconds=elapsed / (cfg.epochs * n_active),
        method=method,
        y_model=y_model,
    )
