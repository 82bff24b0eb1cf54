"""Surrogate lateral-skew plant and excitation signals.

The surrogate is a damped second-order oscillator with optional cubic
stiffness, driven by the yaw torque ``u``::

    skew'' = -2 zeta omega skew' - omega^2 skew - c3 skew^3 + gain u

It is integrated with classical fourth-order Runge-Kutta, ``substeps``
fixed steps per sample period, holding ``u`` constant across the sample
(zero-order hold). Global error in the linear case scales as
``(dt / substeps)**4``; ``tests/test_plant.py`` freezes the measured constant. Gaussian noise, when enabled, is added to the reported output only.

The dynamics here are a stand-in chosen for qualitative resemblance to
wheelset lateral motion. They are not a model of any real roller rig, and any
identification accuracy measured on them is a property of this surrogate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.linalg import expm

from .errors import ConfigurationError
from .series import TimeSeries

__all__ = [
    "PlantParams",
    "PlantSimulator",
    "ExcitationSpec",
    "excitation",
    "generate_dataset",
    "linear_oracle",
]


@dataclass(frozen=True)
class PlantParams:
    """Surrogate coefficients.

    The defaults give a well-damped 160 Hz mode with unit static gain and a
    mild hardening spring (``cubic`` at 0.5 % of ``omega**2``).
    """

    omega: float = 2 * np.pi * 160.0  # natural frequency [rad/s]
    zeta: float = 0.7
    gain: float = (2 * np.pi * 160.0) ** 2
    cubic: float = 0.005 * (2 * np.pi * 160.0) ** 2
    noise_std: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigurationError("omega must be positive")
        if self.zeta < 0:
            raise ConfigurationError("damping ratio must be >= 0")
        if self.noise_std < 0:
            raise ConfigurationError("noise std must be >= 0")
        for name in ("omega", "zeta", "gain", "cubic", "noise_std"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")


class PlantSimulator:
    """Stateful fixed-step simulator; ``step`` advances one sample period."""

    def __init__(self, params: PlantParams | None = None, dt: float = 0.001,
                 seed: int = 0, skew0: float = 0.0, rate0: float = 0.0, substeps: int = 4):
        if not dt > 0:
            raise ConfigurationError("dt must be positive")
        if int(substeps) != substeps or substeps < 1:
            raise ConfigurationError("substeps must be an integer >= 1")
        self.params = params if params is not None else PlantParams()
        self.dt = float(dt)
        self.substeps = int(substeps)
        self.seed = int(seed)
        self._init = (float(skew0), float(rate0))
        self.reset()

    def reset(self):
        self.skew, self.rate = self._init
        self._rng = np.random.default_rng(self.seed)

    def _accel(self, s, v, u):
        p = self.params
        return -2.0 * p.zeta * p.omega * v - p.omega ** 2 * s - p.cubic * s ** 3 + p.gain * u

    def observe(self) -> float:
        """Current skew plus measurement noise (draws from the noise stream)."""
        if self.params.noise_std > 0:
            return self.skew + self.params.noise_std * self._rng.standard_normal()
        return self.skew

    def step(self, u_k: float) -> float:
        """Advance one ``dt`` under constant input ``u_k`` and return the output."""
        h = self.dt / self.substeps
        s, v = self.skew, self.rate
        for _ in range(self.substeps):
            a1 = self._accel(s, v, u_k)
            s2, v2 = s + 0.5 * h * v, v + 0.5 * h * a1
            a2 = self._accel(s2, v2, u_k)
            s3, v3 = s + 0.5 * h * v2, v + 0.5 * h * a2
            a3 = self._accel(s3, v3, u_k)
            s4, v4 = s + h * v3, v + h * a3
            a4 = self._accel(s4, v4, u_k)
            s, v = s + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4), v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        self.skew, self.rate = s, v
        return self.observe()


def linear_oracle(params: PlantParams, dt: float, u, skew0: float = 0.0, rate0: float = 0.0):
    """Exact zero-order-hold response of the linear plant (``cubic`` ignored).

    Returns the noiseless skew at samples ``1..len(u)``.
    """
    p = params
    a = np.array([[0.0, 1.0], [-p.omega ** 2, -2.0 * p.zeta * p.omega]])
    b = np.array([0.0, p.gain])
    blk = np.zeros((3, 3))
    blk[:2, :2] = a
    blk[:2, 2] = b
    phi = expm(blk * dt)
    ad, bd = phi[:2, :2], phi[:2, 2]
    state = np.array([skew0, rate0], dtype=float)
    out = np.empty(len(u))
    for k, uk in enumerate(np.asarray(u, dtype=float)):
        state = ad @ state + bd * uk
        out[k] = state[0]
    return out


@dataclass(frozen=True)
class ExcitationSpec:
    """Excitation signal description.

    ``kind`` is ``"prbs"``, ``"multisine"`` or ``"chirp"``. ``hold`` is the
    PRBS bit length in seconds; ``f_min``/``f_max`` bound the multisine band
    and the chirp sweep. ``offset`` shifts the signal to an operating point;
    ``amplitude == 0`` switches the input off entirely, offset included.
    """

    kind: str = "prbs"
    amplitude: float = 0.6
    horizon: float = 10.0
    dt: float = 0.001
    seed: int = 0
    hold: float = 0.002
    f_min: float = 0.2
    f_max: float = 20.0
    n_tones: int = 24
    offset: float = 0.5

    def __post_init__(self):
        if self.kind not in ("prbs", "multisine", "chirp"):
            raise ConfigurationError(f"unknown excitation kind {self.kind!r}")
        if not self.dt > 0 or not self.horizon > 0:
            raise ConfigurationError("horizon and dt must be positive")
        if self.amplitude < 0:
            raise ConfigurationError("amplitude must be >= 0")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ConfigurationError(f"horizon/dt = {n} is not a whole sample count")
        if not self.hold > 0:
            raise ConfigurationError("hold must be positive")
        if int(self.n_tones) != self.n_tones or self.n_tones < 1:
            raise ConfigurationError("n_tones must be an integer >= 1")
        if not 0 < self.f_min < self.f_max:
            raise ConfigurationError("need 0 < f_min < f_max")

    @property
    def n_samples(self) -> int:
        return int(round(self.horizon / self.dt))


def excitation(spec: ExcitationSpec) -> np.ndarray:
    """Sample the excitation: ``offset`` plus a signal of peak ``amplitude``."""
    n = spec.n_samples
    t = np.arange(n) * spec.dt
    rng = np.random.default_rng(spec.seed)
    if spec.amplitude == 0:
        return np.zeros(n)
    if spec.kind == "prbs":
        hold = max(1, int(round(spec.hold / spec.dt)))
        bits = rng.integers(0, 2, size=-(-n // hold)) * 2.0 - 1.0
        x = np.repeat(bits, hold)[:n]
    elif spec.kind == "chirp":
        x = signal.chirp(t, f0=spec.f_min, t1=t[-1], f1=spec.f_max, method="logarithmic")
    else:
        freqs = np.geomspace(spec.f_min, spec.f_max, spec.n_tones)
        phases = rng.uniform(0.0, 2 * np.pi, spec.n_tones)
        x = np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None]).sum(axis=0)
        x /= np.max(np.abs(x))
    return spec.offset + spec.amplitude * x


def generate_dataset(sim: PlantSimulator, spec: ExcitationSpec) -> TimeSeries:
    """Drive ``sim`` with the excitation and record ``(u, y_real)``.

    ``y_real[k]`` is observed before ``u[k]`` is applied, so the output at
    ``k`` depends on inputs up to ``k-1`` only.
    """
    if abs(sim.dt - spec.dt) > 1e-12:
        sim = PlantSimulator(sim.params, spec.dt, sim.seed, *sim._init, substeps=sim.substeps)
    sim.reset()
    u = excitation(spec)
    y = np.empty_like(u)
    y[0] = sim.observe()
    for k in range(len(u) - 1):
        y[k + 1] = sim.step(u[k])
    return TimeSeries(dt=spec.dt, u=u, y_real=y)
