"""Supervised identification of a dynamic LNU/QNU from input/output records."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numba
import numpy as np

from .core import LinearUnit, NeuralUnit, QuadraticUnit, RegressorLayout, index_pairs, make_unit
from .errors import ConfigurationError
from .series import TimeSeries
from .training import LearningConfig, TrainingReport, _fill_features, _fill_regressor, sweep_arrays, train_epochs

__all__ = ["Scaler", "IdentifiedModel", "identify", "evaluate", "rmse"]


@dataclass(frozen=True)
class Scaler:
    """Affine map to training coordinates: ``(u - u_offset) / u_scale`` etc."""

    u_offset: float = 0.0
    u_scale: float = 1.0
    y_offset: float = 0.0
    y_scale: float = 1.0

    def __post_init__(self):
        if not (self.u_scale > 0 and self.y_scale > 0):
            raise ConfigurationError("scales must be positive")

    @classmethod
    def fit(cls, series: TimeSeries) -> "Scaler":
        us, ys = float(np.std(series.u)), float(np.std(series.y_real))
        return cls(float(np.mean(series.u)), us if us > 0 else 1.0,
                   float(np.mean(series.y_real)), ys if ys > 0 else 1.0)

    def forward(self, series: TimeSeries) -> TimeSeries:
        return TimeSeries(series.dt, (series.u - self.u_offset) / self.u_scale,
                          (series.y_real - self.y_offset) / self.y_scale)

    def regressor_map(self, layout: RegressorLayout) -> np.ndarray:
        """Matrix ``T`` with ``x_scaled = T @ x`` (bias slot included)."""
        n = layout.size
        T = np.eye(n)
        for i in range(1, 1 + layout.n_y):
            T[i, i] = 1.0 / self.y_scale
            T[i, 0] = -self.y_offset / self.y_scale
        for i in range(1 + layout.n_y, n):
            T[i, i] = 1.0 / self.u_scale
            T[i, 0] = -self.u_offset / self.u_scale
        return T


def fold_scaler(unit: NeuralUnit, scaler: Scaler, layout: RegressorLayout) -> NeuralUnit:
    """Equivalent unit in raw coordinates for a unit trained on scaled data.

    An affine change of the regressor keeps both unit classes closed, so the
    folding is exact.
    """
    T = scaler.regressor_map(layout)
    a, c = scaler.y_scale, scaler.y_offset
    if isinstance(unit, LinearUnit):
        w = a * (T.T @ unit.weights)
        w[0] += c
        return LinearUnit(w)
    n = layout.size
    rows, cols = index_pairs(n)
    S = np.zeros((n, n))
    S[rows, cols] = unit.weights
    S = 0.5 * (S + S.T)
    R = a * (T.T @ S @ T)
    R[0, 0] += c
    # back to upper-triangular storage: off-diagonal pairs carry both halves
    w = np.where(rows == cols, R[rows, cols], 2.0 * R[rows, cols])
    return QuadraticUnit(w)


@dataclass(frozen=True)
class IdentifiedModel:
    """Trained dynamic unit in raw (unscaled) coordinates."""

    unit: NeuralUnit
    layout: RegressorLayout
    dt: float
    report: Optional[TrainingReport] = None
    scaler: Optional[Scaler] = None

    def __post_init__(self):
        sweep_arrays(self.unit, self.layout)

    @property
    def architecture(self) -> str:
        return "dqnu" if isinstance(self.unit, QuadraticUnit) else "dlnu"


def identify(series: TimeSeries, architecture: str, cfg: LearningConfig, method: str = "rtrl",
             standardize: bool = False) -> IdentifiedModel:
    """Train a zero-initialised DLNU/DQNU on ``series``.

    With ``standardize`` the unit is trained on z-scored data and folded back
    to raw coordinates afterwards; ``mu`` then applies to the scaled problem.
    """
    layout = cfg.layout
    if layout.n_u < 1 and layout.n_y < 1:
        raise ConfigurationError("need at least one lag")
    if len(series) < 10 * max(layout.start, 1):
        raise ConfigurationError(
            f"series has {len(series)} samples; need >= {10 * max(layout.start, 1)} "
            f"for n_y={layout.n_y}, n_u={layout.n_u}"
        )
    unit = make_unit(architecture, layout.size)
    scaler = Scaler.fit(series) if standardize else None
    data = scaler.forward(series) if scaler else series
    report = train_epochs(data, unit, cfg, method)
    trained = report.unit
    if scaler is not None:
        trained = fold_scaler(trained, scaler, layout)
    return IdentifiedModel(trained, layout, series.dt, report, scaler)


@numba.njit(cache=True)
def _simulate(u, y_real, w, n_y, n_u, rows, cols, quadratic, one_step, y_model):
    start = max(n_y, n_u)
    x = np.empty(1 + n_y + n_u)
    f = np.empty(w.size)
    for k in range(min(start, y_real.size)):
        y_model[k] = y_real[k]
    for k in range(start, y_real.size):
        if one_step:
            _fill_regressor(y_real, u, k, n_y, n_u, x)
        else:
            _fill_regressor(y_model, u, k, n_y, n_u, x)
        _fill_features(x, rows, cols, quadratic, f)
        acc = 0.0
        for p in range(w.size):
            acc += w[p] * f[p]
        y_model[k] = acc


def evaluate(model: IdentifiedModel, series: TimeSeries, mode: str = "free_run") -> TimeSeries:
    """Fill ``y_model`` and ``e``.

    ``one_step`` feeds measured outputs into the regressor; ``free_run`` feeds
    the model's own outputs and reads ``y_real`` only for the first
    ``max(n_y, n_u)`` samples, which are copied to start the recursion.
    """
    if mode not in ("one_step", "free_run"):
        raise ConfigurationError(f"mode must be 'one_step' or 'free_run', got {mode!r}")
    rows, cols, quadratic = sweep_arrays(model.unit, model.layout)
    y_model = np.empty(len(series))
    _simulate(series.u, series.y_real, np.array(model.unit.weights), model.layout.n_y,
              model.layout.n_u, rows, cols, quadratic, mode == "one_step", y_model)
    return series.with_model(y_model)


def rmse(series: TimeSeries, start: int = 0) -> float:
    e = series.e[start:]
    return float(np.sqrt(np.mean(e * e)))
