import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from mflab.classical import ParticleState, integrate_flow, nbody_rhs, total_energy
from mflab.potentials import builtin_potential

V3 = builtin_potential("gaussian", [1.0, 1.0], 3)


def _state(n, d, seed):
    rng = np.random.default_rng(seed)
    return ParticleState(rng.normal(size=(n, d)), rng.normal(size=(n, d)))


def test_free_flight_is_exact():
    s = _state(5, 2, 0)
    traj = integrate_flow(s, builtin_potential("zero", [], 2), 1.3, 0.1)
    assert np.allclose(traj.final.positions, s.positions + 1.3 * s.momenta, atol=1e-13)
    assert np.array_equal(traj.final.momenta, s.momenta)
    assert traj.times[-1] == pytest.approx(1.3)


def test_two_body_cosine_reduces_to_pendulum():
    # for N = 2 the separation r = x1 - x2 obeys r'' = -(2/N) V'(r) = a sin(r) when kappa = 1
    a, L = 0.5, 2 * np.pi
    V = builtin_potential("cosine", [a, L], 1)
    s = ParticleState(np.array([[0.4], [-0.4]]), np.array([[0.1], [-0.1]]))
    traj = integrate_flow(s, V, 2.0, 1e-3)
    sol = solve_ivp(lambda t, y: [y[1], a * np.sin(y[0])], (0, 2.0), [0.8, 0.2], rtol=1e-12, atol=1e-12)
    r = traj.final.positions[0, 0] - traj.final.positions[1, 0]
    assert r == pytest.approx(sol.y[0, -1], abs=1e-6)


def test_rhs_force_scaling_and_momentum_balance():
    s = _state(6, 3, 1)
    dx, dxi = nbody_rhs(s, V3)
    assert np.array_equal(dx, s.momenta)
    manual = -sum(V3.gradient(s.positions[0] - s.positions[k]) for k in range(1, 6)) / 6
    assert np.allclose(dxi[0], manual)
    assert np.allclose(dxi.sum(axis=0), 0.0, atol=1e-14)


def test_energy_conservation_and_second_order():
    s = _state(8, 3, 2)
    e0 = total_energy(s, V3)
    errs = []
    for dt in (4e-3, 2e-3):
        traj = integrate_flow(s, V3, 1.0, dt, save_every=50)
        errs.append(max(abs(total_energy(traj.state(k), V3) - e0) for k in range(len(traj))))
    assert errs[1] < 1e-5
    assert 3.0 < errs[0] / errs[1] < 5.0


@given(seed=st.integers(0, 2**31), n=st.integers(2, 6))
def test_time_reversibility(seed, n):
    s = _state(n, 2, seed)
    V = builtin_potential("gaussian", [1.0, 0.7], 2)
    fwd = integrate_flow(s, V, 0.5, 1e-2).final
    back = integrate_flow(ParticleState(fwd.positions, -fwd.momenta), V, 0.5, 1e-2).final
    assert np.allclose(back.positions, s.positions, atol=1e-10)
    assert np.allclose(-back.momenta, s.momenta, atol=1e-10)


@given(seed=st.integers(0, 2**31))
def test_total_momentum_conserved(seed):
    s = _state(5, 3, seed)
    traj = integrate_flow(s, V3, 0.3, 1e-2)
    assert np.allclose(traj.momenta.sum(axis=1), s.momenta.sum(axis=0), atol=1e-12)


def test_single_particle_feels_no_self_force():
    s = _state(1, 3, 3)
    traj = integrate_flow(s, V3, 1.0, 0.1)
    assert np.allclose(traj.final.positions, s.positions + s.momenta)


def test_step_lands_on_t_end_and_snapshots():
    traj = integrate_flow(_state(3, 1, 4), builtin_potential("gaussian", [1, 1], 1), 0.35, 0.1, save_every=2)
    assert traj.dt == pytest.approx(0.0875)
    assert np.allclose(traj.times, [0.0, 0.175, 0.35])


def test_invalid_inputs():
    s = _state(3, 2, 5)
    with pytest.raises(ValueError):
        integrate_flow(s, V3, 1.0)
    with pytest.raises(ValueError):
        integrate_flow(s, builtin_potential("zero", [], 2), 1.0, dt=0.0)
    with pytest.raises(ValueError):
        ParticleState(np.zeros((2, 2)), np.zeros((3, 2)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_is_diagnosed():
    s = ParticleState(np.zeros((2, 1)), np.array([[1e308], [-1e308]]))
    with pytest.raises(FloatingPointError):
        integrate_flow(s, builtin_potential("zero", [], 1), 3.0, 1.0)


def test_trajectory_csv(tmp_path):
    traj = integrate_flow(_state(3, 2, 6), builtin_potential("gaussian", [1, 1], 2), 0.2, 0.1)
    traj.to_csv(tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert len(rows) == 3 * 3
    assert set(rows[0]) == {"t", "j", "x0", "x1", "xi0", "xi1"}
    assert float(rows[-1]["x1"]) == traj.positions[-1, 2, 1]
