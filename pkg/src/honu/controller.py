"""Neural-unit feedback controller tuned against an identified model.

The controller is a second LNU/QNU with weights ``v`` acting on

    xi(k) = [1, y(k-1)..y(k-n_qy), e(k-1)..e(k-n_qe)],   e = d - y

where ``y`` is the model output and ``d`` the desired skew. Its output ``q(k)``
(plus an optional disturbance torque) is fed to the model as the newest input
slot, i.e. the position that holds ``u(k-1)`` during identification, and the
model then produces ``y(k)``.

Tuning uses the one-step chain rule

    dy(k)/dv = (dy(k)/dq) * dq(k)/dv = (dy(k)/dq) * features(xi(k))

where ``dy/dq`` is the model's partial derivative with respect to its newest
input. Past outputs are not differentiated through.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numba
import numpy as np

from .core import (
    NeuralUnit,
    QuadraticUnit,
    RegressorLayout,
    features,
    input_derivative,
    make_unit,
    predict,
)
from .errors import ConfigurationError, DivergenceError
from .identification import IdentifiedModel
from .plant import PlantSimulator
from .training import LearningConfig, METHODS, _fill_features, bptt_lm_update, sweep_arrays

__all__ = [
    "DesiredProfile",
    "ControllerState",
    "ClosedLoopResult",
    "TuningReport",
    "build_xi",
    "controller_output",
    "model_regressor",
    "output_sensitivity",
    "one_step_output",
    "tune_controller",
    "run_closed_loop",
]


def build_xi(model_outputs, desired, k: int, n_qy: int, n_qe: int) -> np.ndarray:
    """``[1, y(k-1)..y(k-n_qy), (d-y)(k-1)..(d-y)(k-n_qe)]``."""
    if k < max(n_qy, n_qe):
        raise ConfigurationError(
            f"sample {k} has insufficient history for n_qy={n_qy}, n_qe={n_qe}"
        )
    y = np.asarray(model_outputs, dtype=float)
    d = np.asarray(desired, dtype=float)
    xi = np.empty(1 + n_qy + n_qe)
    xi[0] = 1.0
    for i in range(n_qy):
        xi[1 + i] = y[k - 1 - i]
    for i in range(n_qe):
        xi[1 + n_qy + i] = d[k - 1 - i] - y[k - 1 - i]
    return xi


@dataclass(frozen=True)
class DesiredProfile:
    """Desired skew trajectory ``d(k)``.

    ``zero`` is identically zero. ``band`` is ``center`` plus a sum of
    ``n_tones`` sines between ``f_min`` and ``f_max`` scaled to peak
    ``amplitude``. ``step`` holds random levels in
    ``center +- amplitude`` for ``hold`` seconds each.
    """

    kind: str = "band"
    center: float = 0.3
    amplitude: float = 0.05
    f_min: float = 0.2
    f_max: float = 2.0
    n_tones: int = 6
    hold: float = 1.0
    seed: int = 1

    KINDS = ("zero", "band", "step")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"desired profile kind must be one of {self.KINDS}, got {self.kind!r}")
        if self.amplitude < 0:
            raise ConfigurationError("desired amplitude must be >= 0")
        if not 0 < self.f_min <= self.f_max:
            raise ConfigurationError("need 0 < f_min <= f_max")
        if int(self.n_tones) != self.n_tones or self.n_tones < 1:
            raise ConfigurationError("n_tones must be an integer >= 1")
        if not self.hold > 0:
            raise ConfigurationError("hold must be positive")

    def samples(self, n: int, dt: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(n)
        rng = np.random.default_rng(self.seed)
        if self.kind == "step":
            h = max(1, int(round(self.hold / dt)))
            levels = rng.uniform(-1.0, 1.0, -(-n // h))
            return self.center + self.amplitude * np.repeat(levels, h)[:n]
        t = np.arange(n) * dt
        freqs = np.linspace(self.f_min, self.f_max, self.n_tones)
        phases = rng.uniform(0.0, 2 * np.pi, self.n_tones)
        x = np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None]).sum(axis=0)
        peak = np.max(np.abs(x))
        return self.center + self.amplitude * (x / peak if peak > 0 else x)


@dataclass(frozen=True)
class ControllerState:
    """Controller unit over ``xi`` plus update stride and optional output clamp."""

    unit: NeuralUnit
    n_qy: int = 0
    n_qe: int = 2
    resample_stride: int = 1
    q_limit: Optional[float] = None

    def __post_init__(self):
        if int(self.resample_stride) != self.resample_stride or self.resample_stride < 1:
            raise ConfigurationError("resample_stride must be an integer >= 1")
        if self.q_limit is not None and not self.q_limit > 0:
            raise ConfigurationError("q_limit must be positive")
        sweep_arrays(self.unit, self.layout)

    @classmethod
    def zeros(cls, kind: str, n_qy: int, n_qe: int, **kw) -> "ControllerState":
        return cls(make_unit(kind, 1 + n_qy + n_qe), n_qy, n_qe, **kw)

    @property
    def layout(self) -> RegressorLayout:
        return RegressorLayout(self.n_qy, self.n_qe)

    def with_unit(self, unit: NeuralUnit) -> "ControllerState":
        return ControllerState(unit, self.n_qy, self.n_qe, self.resample_stride, self.q_limit)


def controller_output(state: ControllerState, xi) -> float:
    """``q = v . xi`` (LNU) or ``rowxi . colV`` (QNU), clamped if configured."""
    q = predict(state.unit, xi)
    if state.q_limit is not None:
        q = min(max(q, -state.q_limit), state.q_limit)
    return q


def model_regressor(model_outputs, model_inputs, k: int, n_y: int, n_u: int) -> np.ndarray:
    """Closed-loop model regressor at step ``k``.

    ``model_inputs[k]`` is the value fed at step ``k`` and sits in the newest
    input slot: ``[1, y(k-1)..y(k-n_y), m(k), m(k-1)..m(k-n_u+1)]``.
    """
    y = np.asarray(model_outputs, dtype=float)
    m = np.asarray(model_inputs, dtype=float)
    x = np.empty(1 + n_y + n_u)
    x[0] = 1.0
    for i in range(n_y):
        x[1 + i] = y[k - 1 - i]
    for i in range(n_u):
        x[1 + n_y + i] = m[k - i]
    return x


def output_sensitivity(model: IdentifiedModel, x) -> float:
    """``dy/dq``: model derivative with respect to its newest input slot."""
    return input_derivative(model.unit, x, model.layout.newest_input)


def one_step_output(model: IdentifiedModel, state: ControllerState, model_outputs, desired,
                    model_inputs, k: int, disturbance: float = 0.0) -> float:
    """Model output ``y(k)`` when the controller acts at step ``k``.

    ``model_inputs`` supplies the older input slots; entry ``k`` is replaced by
    ``q(k) + disturbance``.
    """
    xi = build_xi(model_outputs, desired, k, state.n_qy, state.n_qe)
    m = np.array(model_inputs, dtype=float)
    m[k] = controller_output(state, xi) + disturbance
    x = model_regressor(model_outputs, m, k, model.layout.n_y, model.layout.n_u)
    return predict(model.unit, x)


def chain_rule_gradient(model: IdentifiedModel, state: ControllerState, model_outputs, desired,
                        model_inputs, k: int, disturbance: float = 0.0) -> np.ndarray:
    """Analytic ``dy(k)/dv`` at step ``k`` (reference, non-compiled)."""
    xi = build_xi(model_outputs, desired, k, state.n_qy, state.n_qe)
    q_raw = predict(state.unit, xi)
    m = np.array(model_inputs, dtype=float)
    m[k] = controller_output(state, xi) + disturbance
    x = model_regressor(model_outputs, m, k, model.layout.n_y, model.layout.n_u)
    if state.q_limit is not None and abs(q_raw) > state.q_limit:
        return np.zeros(state.unit.weights.size)
    return output_sensitivity(model, x) * features(state.unit, xi)


@dataclass
class ClosedLoopResult:
    """Closed-loop trace; ``q[k]`` is the controller value fed at step ``k``.

    ``y`` is whatever closed the loop (model or surrogate plant).
    """

    dt: float
    d: np.ndarray
    q: np.ndarray
    y: np.ndarray
    start: int
    disturbance: np.ndarray = field(default=None, repr=False)
    y_model: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def e_reg(self) -> np.ndarray:
        return self.d - self.y

    @property
    def e_model(self) -> Optional[np.ndarray]:
        """Regulation error of the model prediction (plant-in-loop runs only)."""
        return None if self.y_model is None else self.d - self.y_model

    @property
    def sse(self) -> float:
        e = self.e_reg[self.start:]
        return float(e @ e)

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.d.size) * self.dt

    def __len__(self):
        return self.d.size


@dataclass
class TuningReport:
    sse_per_epoch: List[float]
    final_sse: float
    per_step_seconds: float
    method: str


# --- compiled closed loop ----------------------------------------------------

_EVAL, _RTRL, _JACOBIAN = 0, 1, 2


@numba.njit(cache=True)
def _loop(wm, n_y, n_u, m_rows, m_cols, m_quad,
          v, n_qy, n_qe, c_rows, c_cols, c_quad, q_limit,
          d, dist, y_init, mode, mu, normalize, stride,
          y, q, J):
    """Run the closed loop in place. Returns (sse, failing sample or -1).

    mode 0 evaluates, 1 adapts ``v`` every ``stride`` samples, 2 fills the
    static Jacobian ``J`` (rows from ``start``) with frozen weights.
    """
    n = d.size
    start = max(max(n_y, n_u), max(n_qy, n_qe))
    nx = 1 + n_y + n_u
    pos = 1 + n_y
    x = np.empty(nx)
    xi = np.empty(1 + n_qy + n_qe)
    fm = np.empty(wm.size)
    fc = np.empty(v.size)
    m_in = np.empty(n)
    for k in range(min(start, n)):
        y[k] = y_init
        q[k] = 0.0
        m_in[k] = dist[k]
    sse = 0.0
    for k in range(start, n):
        xi[0] = 1.0
        for i in range(n_qy):
            xi[1 + i] = y[k - 1 - i]
        for i in range(n_qe):
            xi[1 + n_qy + i] = d[k - 1 - i] - y[k - 1 - i]
        _fill_features(xi, c_rows, c_cols, c_quad, fc)
        qk = 0.0
        for p in range(v.size):
            qk += v[p] * fc[p]
        saturated = False
        if q_limit > 0.0:
            if qk > q_limit:
                qk = q_limit
                saturated = True
            elif qk < -q_limit:
                qk = -q_limit
                saturated = True
        q[k] = qk
        m_in[k] = qk + dist[k]
        x[0] = 1.0
        for i in range(n_y):
            x[1 + i] = y[k - 1 - i]
        for i in range(n_u):
            x[pos + i] = m_in[k - i]
        _fill_features(x, m_rows, m_cols, m_quad, fm)
        yk = 0.0
        for p in range(wm.size):
            yk += wm[p] * fm[p]
        y[k] = yk
        e = d[k] - yk
        sse += e * e
        if not np.isfinite(yk) or not np.isfinite(qk):
            return sse, k
        if mode == _EVAL:
            continue
        # dy/dq at the current regressor
        if m_quad:
            b = 0.0
            for p in range(m_rows.size):
                i = m_rows[p]
                j = m_cols[p]
                if i == pos and j == pos:
                    b += 2.0 * wm[p] * x[pos]
                elif i == pos:
                    b += wm[p] * x[j]
                elif j == pos:
                    b += wm[p] * x[i]
        else:
            b = wm[pos]
        if saturated:
            b = 0.0
        if mode == _JACOBIAN:
            for p in range(v.size):
                J[k - start, p] = b * fc[p]
        elif k % stride == 0 and e * b != 0.0:
            eta = mu
            if normalize:
                ff = 0.0
                for p in range(fc.size):
                    ff += fc[p] * fc[p]
                eta = mu / (ff + 1.0)
            ok = True
            for p in range(v.size):
                v[p] += eta * e * b * fc[p]
                if not np.isfinite(v[p]):
                    ok = False
            if not ok:
                return sse, k
    return sse, -1


def _as_profile(values, n: int, name: str) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim == 0:
        return np.full(n, float(a))
    a = a.reshape(-1)
    if a.size != n:
        raise ConfigurationError(f"{name} has {a.size} samples, expected {n}")
    return a


class _Loop:
    """Bundles the arrays the compiled loop needs for one model/controller pair."""

    def __init__(self, model: IdentifiedModel, state: ControllerState, desired, disturbance,
                 y_init: float):
        self.model, self.state = model, state
        self.d = np.ascontiguousarray(np.asarray(desired, dtype=float).reshape(-1))
        self.dist = _as_profile(disturbance, self.d.size, "disturbance")
        self.y_init = float(y_init)
        ml = model.layout
        if ml.n_u < 1:
            raise ConfigurationError("model needs at least one input lag to be controlled")
        self.m_rows, self.m_cols, self.m_quad = sweep_arrays(model.unit, ml)
        self.c_rows, self.c_cols, self.c_quad = sweep_arrays(state.unit, state.layout)
        self.start = max(ml.start, state.layout.start)
        if self.d.size < self.start + 2:
            raise ConfigurationError(f"desired profile too short ({self.d.size} samples)")
        self.wm = np.array(model.unit.weights, dtype=float)

    def run(self, v, mode, mu=0.0, normalize=False, stride=1):
        n = self.d.size
        y, q = np.empty(n), np.empty(n)
        J = np.empty((n - self.start, v.size) if mode == _JACOBIAN else (0, v.size))
        ml, st = self.model.layout, self.state
        sse, bad = _loop(self.wm, ml.n_y, ml.n_u, self.m_rows, self.m_cols, self.m_quad,
                         v, st.n_qy, st.n_qe, self.c_rows, self.c_cols, self.c_quad,
                         float(st.q_limit or 0.0), self.d, self.dist, self.y_init,
                         mode, float(mu), bool(normalize), int(stride), y, q, J)
        return sse, int(bad), y, q, J

    def result(self, y, q) -> ClosedLoopResult:
        return ClosedLoopResult(dt=self.model.dt, d=self.d.copy(), q=q, y=y, start=self.start,
                                disturbance=self.dist.copy())


def tune_controller(model: IdentifiedModel, desired, state: ControllerState, cfg: LearningConfig,
                    method: str = "rtrl", disturbance=0.0, y_init: float = 0.0):
    """Tune the controller offline against ``model``.

    Each epoch replays the whole desired profile from the same initial state.
    RTRL adapts ``v`` at every sample with ``k % resample_stride == 0``; BPTT
    collects the static Jacobian with frozen ``v`` and applies one
    Levenberg-Marquardt step. ``cfg.normalize`` divides the RTRL rate by
    ``features(xi).features(xi) + 1``; it is ignored for BPTT.

    Returns ``(tuned_state, closed_loop_result, tuning_report)`` where the
    result is a frozen-weight run of the tuned controller.
    """
    method = method.lower()
    if method not in METHODS:
        raise ConfigurationError(f"method must be one of {METHODS}, got {method!r}")
    cfg = cfg.for_method(method)
    loop = _Loop(model, state, desired, disturbance, y_init)
    v = np.array(state.unit.weights, dtype=float)
    history: List[float] = []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        if method == "rtrl":
            sse, bad, *_ = loop.run(v, _RTRL, cfg.mu, cfg.normalize, state.resample_stride)
            if bad >= 0 or not np.isfinite(sse):
                raise DivergenceError("controller tuning diverged", epoch=epoch,
                                      sample=bad if bad >= 0 else None, history=history)
        else:
            sse, bad, y, _, J = loop.run(v, _JACOBIAN)
            if bad >= 0 or not np.isfinite(sse):
                raise DivergenceError("closed loop diverged", epoch=epoch,
                                      sample=bad if bad >= 0 else None, history=history)
            e = loop.d[loop.start:] - y[loop.start:]
            v = v + bptt_lm_update(J, e, cfg.mu)
            if not np.all(np.isfinite(v)):
                raise DivergenceError("non-finite controller weights", epoch=epoch,
                                      history=history)
        history.append(float(sse))
    per_step = (time.perf_counter() - t0) / (cfg.epochs * (loop.d.size - loop.start))
    tuned = state.with_unit(state.unit.with_weights(v))
    sse, bad, y, q, _ = loop.run(v.copy(), _EVAL)
    if bad >= 0 or not np.isfinite(sse):
        raise DivergenceError("tuned closed loop diverged", epoch=cfg.epochs, sample=bad,
                              history=history)
    report = TuningReport(history, float(sse), per_step, method)
    return tuned, loop.result(y, q), report


def run_closed_loop(model: IdentifiedModel, controller: ControllerState, desired,
                    plant: Optional[PlantSimulator] = None, disturbance=0.0,
                    y_init: float = 0.0) -> ClosedLoopResult:
    """Evaluate the loop with frozen weights.

    Without ``plant`` the identified model closes the loop. With ``plant`` the
    surrogate plant closes it instead: ``y`` holds the (reset) plant's observed
    skew and ``y_model`` the identified model's free-run prediction under the
    same applied torques, so both regulation errors can be reported.
    """
    loop = _Loop(model, controller, desired, disturbance, y_init)
    v = np.array(controller.unit.weights, dtype=float)
    if plant is None:
        sse, bad, y, q, _ = loop.run(v, _EVAL)
        if bad >= 0:
            raise DivergenceError("closed loop diverged", sample=bad)
        return loop.result(y, q)
    return _plant_loop(loop, controller, plant)


def _plant_loop(loop: _Loop, controller: ControllerState, plant: PlantSimulator) -> ClosedLoopResult:
    n, start = loop.d.size, loop.start
    d, dist = loop.d, loop.dist
    y = np.empty(n)
    q = np.zeros(n)
    m_in = dist.copy()
    plant.reset()
    # m_in[k] drives the plant from sample k-1 to k
    y[0] = plant.observe()
    for k in range(1, start):
        y[k] = plant.step(m_in[k])
    for k in range(start, n):
        xi = build_xi(y, d, k, controller.n_qy, controller.n_qe)
        q[k] = controller_output(controller, xi)
        m_in[k] = q[k] + dist[k]
        y[k] = plant.step(m_in[k])
        if not np.isfinite(y[k]) or abs(y[k]) > 1e12:
            raise DivergenceError("plant diverged in closed loop", sample=k)
    y_model = np.empty(n)
    y_model[:start] = y[:start]
    ml = loop.model.layout
    for k in range(start, n):
        x = model_regressor(y_model, m_in, k, ml.n_y, ml.n_u)
        y_model[k] = predict(loop.model.unit, x)
    return ClosedLoopResult(dt=loop.model.dt, d=d.copy(), q=q, y=y, start=start,
                            disturbance=dist.copy(), y_model=y_model)
