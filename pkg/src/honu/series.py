"""Uniformly sampled input/output records."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError


def _vec(a) -> np.ndarray:
    return np.asarray(a, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Plant input ``u``, plant output ``y_real`` and optionally a model overlay.

    When both ``y_model`` and ``e`` are present, ``e == y_real - y_model``.
    Passing only ``y_model`` fills ``e`` automatically.
    """

    dt: float
    u: np.ndarray
    y_real: np.ndarray
    y_model: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        u, y = _vec(self.u), _vec(self.y_real)
        if u.size != y.size:
            raise ConfigurationError(f"u has {u.size} samples but y_real has {y.size}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y_real", y)
        if self.y_model is not None:
            ym = _vec(self.y_model)
            if ym.size != y.size:
                raise ConfigurationError("y_model length differs from y_real")
            object.__setattr__(self, "y_model", ym)
            if self.e is None:
                object.__setattr__(self, "e", y - ym)
        if self.e is not None:
            e = _vec(self.e)
            if e.size != y.size:
                raise ConfigurationError("e length differs from y_real")
            object.__setattr__(self, "e", e)

    def __len__(self):
        return self.u.size

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def with_model(self, y_model) -> "TimeSeries":
        return replace(self, y_model=_vec(y_model), e=None)
