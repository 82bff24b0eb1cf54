import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from honu.errors import ConfigurationError
from honu.plant import ExcitationSpec, PlantParams, PlantSimulator, excitation, generate_dataset, linear_oracle
from oracles import critically_damped_step, total_variation_gain

# Measured max |RK4 - exact| over 1 s of multisine input on the default linear
# plant: 4.63e-6 at dt=1e-3 with 4 substeps, i.e. 4.63 dt^2 or 1.19e9 h^4 with
# h = dt / substeps. Frozen with ~25 % headroom.
C_DT2 = 6.0
C_H4 = 1.5e9


def run(sim, u):
    return np.array([sim.step(x) for x in u])


def test_rest_stays_at_rest():
    y = run(PlantSimulator(), np.zeros(500))
    assert not np.any(y)


def test_critically_damped_step():
    p = PlantParams(omega=2 * np.pi * 20, zeta=1.0, gain=3.0, cubic=0.0)
    y = run(PlantSimulator(p), np.full(2000, 0.4))
    t = 0.001 * np.arange(1, 2001)
    exact = critically_damped_step(p.omega, p.gain, 0.4, t)
    np.testing.assert_allclose(y, exact, atol=1e-9)
    assert np.all(np.diff(y) >= 0)
    assert np.all(y <= p.gain * 0.4 / p.omega ** 2)


def test_linear_oracle_regression_bound():
    p = PlantParams(cubic=0.0)
    spec = ExcitationSpec(kind="multisine", horizon=1.0)
    u = excitation(spec)
    err = np.max(np.abs(run(PlantSimulator(p), u) - linear_oracle(p, spec.dt, u)))
    assert err <= C_DT2 * spec.dt ** 2
    assert err <= C_H4 * (spec.dt / 4) ** 4


def test_fourth_order_convergence():
    p = PlantParams(cubic=0.0)
    u = excitation(ExcitationSpec(kind="multisine", horizon=1.0))
    exact = linear_oracle(p, 0.001, u)
    e4 = np.max(np.abs(run(PlantSimulator(p, substeps=4), u) - exact))
    e8 = np.max(np.abs(run(PlantSimulator(p, substeps=8), u) - exact))
    assert 12 < e4 / e8 < 20


@settings(max_examples=20)
@given(st.sampled_from([0.5, 0.7, 1.0, 2.0]), st.integers(0, 1000), st.floats(0.1, 3.0))
def test_bibo_bound(zeta, seed, amp):
    p = PlantParams(omega=2 * np.pi * 40, zeta=zeta, gain=5.0, cubic=0.0)
    u = excitation(ExcitationSpec(amplitude=amp, offset=0.0, horizon=0.5, hold=0.01, seed=seed))
    y = run(PlantSimulator(p), u)
    bound = p.gain / p.omega ** 2 * np.max(np.abs(u)) * total_variation_gain(zeta)
    assert np.max(np.abs(y)) <= bound * (1 + 1e-6)


def test_noise_is_seeded():
    p = PlantParams(noise_std=0.01)
    u = excitation(ExcitationSpec(horizon=0.2))
    a = run(PlantSimulator(p, seed=3), u)
    b = run(PlantSimulator(p, seed=3), u)
    c = run(PlantSimulator(p, seed=4), u)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)
    clean = run(PlantSimulator(PlantParams()), u)
    assert 0.005 < np.std(a - clean) < 0.02


def test_reset_restarts():
    sim = PlantSimulator(PlantParams(noise_std=0.1), seed=1)
    u = np.ones(50)
    a = run(sim, u)
    sim.reset()
    assert run(sim, u).tobytes() == a.tobytes()


@pytest.mark.parametrize("kw", [dict(omega=0), dict(zeta=-0.1), dict(noise_std=-1), dict(gain=np.nan)])
def test_params_validation(kw):
    with pytest.raises(ConfigurationError):
        PlantParams(**kw)


@pytest.mark.parametrize("kw", [dict(dt=0), dict(substeps=0)])
def test_simulator_validation(kw):
    with pytest.raises(ConfigurationError):
        PlantSimulator(**kw)


# --- excitation and datasets -------------------------------------------------------

def test_default_regime():
    ts = generate_dataset(PlantSimulator(), ExcitationSpec())
    assert len(ts) == 10000 and ts.dt == 0.001


def test_zero_amplitude_gives_zero_output():
    ts = generate_dataset(PlantSimulator(), ExcitationSpec(amplitude=0.0))
    assert not np.any(ts.u) and not np.any(ts.y_real)


def test_dataset_repeatable():
    a = generate_dataset(PlantSimulator(), ExcitationSpec(seed=5))
    b = generate_dataset(PlantSimulator(), ExcitationSpec(seed=5))
    assert a.u.tobytes() == b.u.tobytes() and a.y_real.tobytes() == b.y_real.tobytes()


def test_output_observed_before_input():
    spec = ExcitationSpec(horizon=0.05)
    ts = generate_dataset(PlantSimulator(), spec)
    assert ts.y_real[0] == 0.0
    sim = PlantSimulator()
    np.testing.assert_array_equal(ts.y_real[1:], run(sim, ts.u[:-1]))


@pytest.mark.parametrize("kind", ["prbs", "multisine", "chirp"])
def test_excitation_peak_and_offset(kind):
    u = excitation(ExcitationSpec(kind=kind, amplitude=0.6, offset=0.5))
    assert u.size == 10000
    assert np.max(np.abs(u - 0.5)) == pytest.approx(0.6, rel=1e-3)


def test_prbs_hold():
    u = excitation(ExcitationSpec(kind="prbs", hold=0.005, offset=0.0, amplitude=1.0))
    assert set(np.unique(u)) <= {-1.0, 1.0}
    blocks = u.reshape(-1, 5)
    assert np.all(blocks == blocks[:, :1])


@pytest.mark.parametrize("kw", [dict(kind="step"), dict(horizon=1.0005), dict(amplitude=-1),
                                dict(f_min=5.0, f_max=1.0), dict(hold=0.0), dict(dt=0)])
def test_excitation_validation(kw):
    with pytest.raises(ConfigurationError):
        ExcitationSpec(**kw)
