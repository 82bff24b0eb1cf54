import numpy as np
import pytest

from honu.core import LinearUnit, QuadraticUnit, RegressorLayout, build_regressor, make_unit, predict
from honu.errors import ConfigurationError
from honu.identification import IdentifiedModel, Scaler, evaluate, fold_scaler, identify, rmse
from honu.plant import ExcitationSpec, PlantParams, PlantSimulator, generate_dataset, linear_oracle
from honu.series import TimeSeries
from honu.training import LearningConfig
from oracles import zoh_arx

FIG = dict(mu=1.0, epochs=10, normalize=True, n_y=3, n_u=5)


def hidden_lnu_series(w, n_y, n_u, n=10000, seed=0):
    """Plant that is itself a parallel LNU driven by the default excitation."""
    u = generate_dataset(PlantSimulator(), ExcitationSpec(seed=seed)).u
    y = np.zeros(n)
    for k in range(max(n_y, n_u), n):
        y[k] = w @ build_regressor(y, u, k, n_y, n_u)
    return TimeSeries(0.001, u, y)


# --- TimeSeries ---------------------------------------------------------------

def test_timeseries_fills_error():
    ts = TimeSeries(0.1, [1, 2], [3, 4], y_model=[1, 1])
    np.testing.assert_array_equal(ts.e, [2, 3])
    np.testing.assert_allclose(ts.t, [0, 0.1])
    assert len(ts) == 2


@pytest.mark.parametrize("kw", [dict(dt=0, u=[1], y_real=[1]), dict(dt=1, u=[1, 2], y_real=[1]),
                                dict(dt=1, u=[1], y_real=[1], y_model=[1, 2])])
def test_timeseries_validation(kw):
    with pytest.raises(ConfigurationError):
        TimeSeries(**kw)


# --- identify -------------------------------------------------------------------

def test_dlnu_sse_below_first_epoch(dlnu_model):
    s = dlnu_model.report.sse_per_epoch
    assert len(s) == 10
    assert all(v < s[0] for v in s[1:])


def test_dqnu_converges_faster(dlnu_model, dqnu_model):
    target = dlnu_model.report.sse_per_epoch[-1]
    q = dqnu_model.report.sse_per_epoch
    n_q = next(i + 1 for i, v in enumerate(q) if v <= target)
    assert n_q < 10


def test_zero_series_leaves_zero_weights():
    ts = TimeSeries(0.001, np.zeros(200), np.zeros(200))
    m = identify(ts, "dqnu", LearningConfig(**FIG))
    assert not np.any(m.unit.weights)
    assert m.report.sse_per_epoch == [0.0] * 10


def test_series_length_precondition():
    ts = TimeSeries(0.001, np.zeros(49), np.zeros(49))
    with pytest.raises(ConfigurationError, match="need >= 50"):
        identify(ts, "dlnu", LearningConfig(**FIG))


def test_unknown_architecture(surrogate_series):
    with pytest.raises(ConfigurationError):
        identify(surrogate_series, "dcnu", LearningConfig(**FIG))


def test_identify_deterministic(surrogate_series):
    c = LearningConfig(mu=1.0, epochs=2, n_y=3, n_u=5)
    a = identify(surrogate_series, "dqnu", c)
    b = identify(surrogate_series, "dqnu", c)
    assert a.unit.weights.tobytes() == b.unit.weights.tobytes()


def test_hidden_lnu_recovered():
    w = np.array([0.0, 0.6, -0.2, 0.3, 0.3])
    ts = hidden_lnu_series(w, 2, 2)
    m = identify(ts, "dlnu", LearningConfig(mu=1.0, epochs=20, n_y=2, n_u=2))
    assert np.max(np.abs(m.unit.weights - w)) <= 1e-3
    assert rmse(evaluate(m, ts, "free_run")) <= 1e-3 * np.std(ts.y_real)


def test_model_layout_must_match_unit():
    with pytest.raises(ConfigurationError):
        IdentifiedModel(make_unit("lnu", 4), RegressorLayout(3, 5), 0.001)


# --- evaluate -------------------------------------------------------------------

def test_exact_linear_model_one_step():
    p = PlantParams(cubic=0.0)
    u = generate_dataset(PlantSimulator(p), ExcitationSpec()).u
    y = np.concatenate([[0.0], linear_oracle(p, 0.001, u[:-1])])
    ts = TimeSeries(0.001, u, y)
    model = IdentifiedModel(LinearUnit(zoh_arx(p.omega, p.zeta, p.gain, 0.001)), RegressorLayout(2, 2),
                            0.001)
    ev = evaluate(model, ts, "one_step")
    assert np.max(np.abs(ev.e)) <= 1e-9


def test_zero_model(surrogate_series):
    model = IdentifiedModel(make_unit("qnu", 9), RegressorLayout(3, 5), 0.001)
    for mode in ("one_step", "free_run"):
        ev = evaluate(model, surrogate_series, mode)
        # warm-up samples copy y_real
        np.testing.assert_array_equal(ev.y_model[:5], surrogate_series.y_real[:5])
        assert not np.any(ev.y_model[5:])
        np.testing.assert_array_equal(ev.e[5:], surrogate_series.y_real[5:])


@pytest.mark.parametrize("seed", range(4))
def test_free_run_error_exceeds_one_step(seed):
    ts = generate_dataset(PlantSimulator(), ExcitationSpec(seed=seed, horizon=2.0))
    m = identify(ts, "dlnu", LearningConfig(mu=1.0, epochs=2, n_y=2, n_u=2))
    assert rmse(evaluate(m, ts, "free_run"), 2) >= rmse(evaluate(m, ts, "one_step"), 2)


def test_evaluate_reads_only_allowed_signals(dqnu_model, surrogate_series):
    ts = surrogate_series
    start = dqnu_model.layout.start
    free = evaluate(dqnu_model, ts, "free_run")
    poisoned = ts.y_real.copy()
    poisoned[start:] = np.nan
    free_p = evaluate(dqnu_model, TimeSeries(ts.dt, ts.u, poisoned), "free_run")
    np.testing.assert_array_equal(free.y_model, free_p.y_model)

    one = evaluate(dqnu_model, ts, "one_step")
    junk = TimeSeries(ts.dt, ts.u, ts.y_real, y_model=np.full(len(ts), np.nan))
    np.testing.assert_array_equal(evaluate(dqnu_model, junk, "one_step").y_model, one.y_model)


def test_evaluate_mode_check(dqnu_model, surrogate_series):
    with pytest.raises(ConfigurationError):
        evaluate(dqnu_model, surrogate_series, "teacher")


# --- scaler -----------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["lnu", "qnu"])
def test_fold_scaler_exact(kind):
    rng = np.random.default_rng(4)
    layout = RegressorLayout(2, 3)
    sc = Scaler(0.4, 2.5, -0.1, 0.03)
    unit = make_unit(kind, layout.size)
    unit = unit.with_weights(rng.standard_normal(unit.weights.size))
    raw = fold_scaler(unit, sc, layout)
    T = sc.regressor_map(layout)
    for _ in range(20):
        x = np.concatenate([[1.0], rng.standard_normal(layout.size - 1)])
        expect = sc.y_offset + sc.y_scale * predict(unit, T @ x)
        assert predict(raw, x) == pytest.approx(expect, rel=1e-10, abs=1e-12)


def test_standardized_identification(surrogate_series):
    c = LearningConfig(mu=1.0, epochs=3, n_y=3, n_u=5)
    m = identify(surrogate_series, "dlnu", c, standardize=True)
    assert m.scaler is not None
    ev = evaluate(m, surrogate_series, "one_step")
    assert rmse(ev, 5) < np.std(surrogate_series.y_real)


def test_scaler_rejects_bad_scale():
    with pytest.raises(ConfigurationError):
        Scaler(0, 0, 0, 1)
