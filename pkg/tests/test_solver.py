import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixedwave.errors import InvalidArgument
from mixedwave.grid import assemble, build_grid, constant_potential
from mixedwave.inverse import discretize_source
from mixedwave.presets import smooth_sine_potential, source_f, source_g, step_potential
from mixedwave.solver import (Forcing, State, Trajectory, boundary_trace, energy,
                              energy_bound_ratio, energy_history, integrate, make_time_grid,
                              observation_Y)
from mixedwave.spectral import generalized_eigen


@pytest.fixture(scope="module")
def n3():
    ops = assemble(build_grid(3), constant_potential(0))
    return ops, generalized_eigen(ops)


def test_time_grid():
    tg = make_time_grid(3.0, 0.1)
    assert tg.steps == 30 and tg.dt == pytest.approx(0.1, rel=1e-15)
    assert tg.times[-1] == 3.0 and len(tg.times) == 31
    # dt that does not divide T is shrunk
    tg = make_time_grid(1.0, 0.3)
    assert tg.steps == 4 and tg.dt == 0.25
    with pytest.raises(InvalidArgument):
        make_time_grid(0.0, 0.1)
    w = make_time_grid(2.0, 0.5).trapezoid_weights()
    np.testing.assert_allclose(w, [0.25, 0.5, 0.5, 0.5, 0.25])


@given(st.floats(0.01, 10), st.floats(1e-3, 1))
def test_time_grid_invariant(T, dt):
    tg = make_time_grid(T, dt)
    assert tg.steps >= 1 and tg.dt <= dt * (1 + 1e-9)
    assert abs(tg.steps * tg.dt - T) <= 4 * np.spacing(T)


def test_zero_data_stays_zero(n3):
    ops, _ = n3
    traj = integrate(ops, None, None, make_time_grid(3.0, ops.h))
    assert len(traj) == 13
    assert not np.any(traj.W) and not np.any(traj.V) and not np.any(traj.A)
    assert not np.any(boundary_trace(traj).samples)


def test_single_mode_stays_in_span(n3):
    ops, spec = n3
    psi = spec.psi
    traj = integrate(ops, (psi[:, 0], np.zeros(3)), None, make_time_grid(3.0, 0.01))
    coef = spec.coefficients(traj.W.T)
    assert np.max(np.abs(coef[1:])) <= 1e-9


def test_single_mode_second_order(n3):
    ops, spec = n3
    psi1, mu1 = spec.psi[:, 0], spec.mu[0]
    assert mu1 == pytest.approx(10.9807, abs=1e-4)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        tg = make_time_grid(3.0, dt)
        traj = integrate(ops, (psi1, np.zeros(3)), None, tg)
        exact = np.cos(np.sqrt(mu1) * tg.times)[:, None] * psi1
        errs.append(np.max(np.abs(traj.W - exact)))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_single_mode_matches_newmark_frequency(n3):
    ops, spec = n3
    psi1 = spec.psi[:, 0]
    tg = make_time_grid(3.0, ops.h)
    traj = integrate(ops, (psi1, np.zeros(3)), None, tg)
    wd = 2 / tg.dt * np.arctan(0.5 * np.sqrt(spec.mu[0]) * tg.dt)
    np.testing.assert_allclose(boundary_trace(traj).samples[:, 0],
                               np.cos(wd * tg.times) * psi1[0] / ops.h, atol=1e-12)
    np.testing.assert_allclose(traj.W, spec.evolve(psi1, np.zeros(3), tg.times, dt=tg.dt), atol=1e-12)


def test_trace_norm_matches_analytic(n3):
    ops, spec = n3
    psi1, lam = spec.psi[:, 0], spec.freq[0]
    T = 3.0
    exact = (psi1[0] / ops.h) ** 2 * (T / 2 + np.sin(2 * lam * T) / (4 * lam))
    errs = []
    for dt in (0.01, 0.005):
        traj = integrate(ops, (psi1, np.zeros(3)), None, make_time_grid(T, dt))
        errs.append(abs(boundary_trace(traj).l2_norms()[0] ** 2 - exact))
    assert errs[0] < 1e-2 * exact
    assert errs[0] / errs[1] > 3.5


def test_energy_examples(n3):
    ops, spec = n3
    assert energy(ops, State(np.zeros(3), np.zeros(3), np.zeros(3))) == 0
    E = energy(ops, State(spec.psi[:, 0], np.zeros(3), np.zeros(3)))
    assert E == pytest.approx(spec.mu[0] / 2, rel=1e-12)
    assert E == pytest.approx(5.4904, abs=1e-4)


@pytest.mark.parametrize("N", [9, 99, 999])
@pytest.mark.parametrize("potential", [constant_potential(0), smooth_sine_potential(), step_potential()],
                         ids=["zero", "sine", "step"])
def test_energy_conservation(N, potential):
    ops = assemble(build_grid(N), potential)
    rng = np.random.default_rng(N)
    W0, W1 = rng.standard_normal(N), rng.standard_normal(N)
    traj = integrate(ops, (W0, W1), None, make_time_grid(3.0, ops.h))
    E = energy_history(ops, traj)
    assert np.max(np.abs(E - E[0])) <= 1e-8 * E[0]


@pytest.mark.parametrize("potential", [smooth_sine_potential(), step_potential()], ids=["sine", "step"])
@pytest.mark.parametrize("src", [source_f(), source_g()], ids=["f", "g"])
def test_forced_energy_bound(potential, src):
    ratios = []
    for N in (9, 99):
        ops = assemble(build_grid(N), potential)
        forcing = Forcing(discretize_source(src, ops))
        traj = integrate(ops, None, forcing, make_time_grid(3.0, ops.h))
        ratios.append(energy_bound_ratio(ops, traj, forcing))
    assert max(ratios) <= 10
    assert ratios[1] == pytest.approx(ratios[0], rel=0.5)


def test_state_residual():
    ops = assemble(build_grid(20), smooth_sine_potential())
    rng = np.random.default_rng(1)
    F = rng.standard_normal(20)
    lam = lambda t: 1 + np.sin(t)
    tg = make_time_grid(2.0, 0.05)
    traj = integrate(ops, (rng.standard_normal(20), rng.standard_normal(20)), Forcing(F, lam), tg)
    G = lam(tg.times)[:, None] * F
    for k in range(len(traj)):
        r = ops.M @ traj.A[k] + ops.S @ traj.W[k] - ops.M @ G[k]
        scale = np.linalg.norm(ops.S @ traj.W[k]) + np.linalg.norm(ops.M @ G[k])
        assert np.linalg.norm(r) <= 1e-10 * scale


def test_time_convergence_order():
    ops = assemble(build_grid(15), smooth_sine_potential())
    W0, W1 = np.sin(np.pi * ops.grid.interior), np.zeros(15)
    F = Forcing(discretize_source(source_g(), ops), lambda t: np.cos(t))

    def err(dt):
        # against a dt / 4 reference
        coarse = integrate(ops, (W0, W1), F, make_time_grid(1.0, dt)).W
        fine = integrate(ops, (W0, W1), F, make_time_grid(1.0, dt / 4)).W
        return np.max(np.abs(coarse - fine[::4]))

    assert err(0.02) / err(0.01) >= 3.5


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3), st.integers(0, 2 ** 32 - 1))
def test_linearity(alpha, seed):
    rng = np.random.default_rng(seed)
    ops = assemble(build_grid(8), step_potential())
    W0, W1, F = (rng.standard_normal(8) for _ in range(3))
    tg = make_time_grid(1.0, 0.1)
    a = integrate(ops, (alpha * W0, alpha * W1), Forcing(alpha * F), tg)
    b = integrate(ops, (W0, W1), Forcing(F), tg)
    scale = np.max(np.abs(alpha * b.W))
    assert np.max(np.abs(a.W - alpha * b.W)) <= 1e-12 * scale


def test_observation_Y_examples(n3):
    ops, _ = n3
    tg = make_time_grid(3.0, ops.h)
    F = np.array([1.0, 0, 0])
    v = integrate(ops, None, Forcing(F), tg)
    Y = observation_Y(v)
    assert Y.samples[0, 1] == 0.5
    zero = observation_Y(integrate(ops, None, Forcing(np.zeros(3)), tg))
    assert not np.any(zero.samples)
    # same as the trace of the differentiated trajectory
    dv = Trajectory(v.time_grid, v.V, v.A, np.zeros_like(v.A))
    np.testing.assert_allclose(Y.samples, boundary_trace(dv).samples, atol=1e-10)


def test_observation_Y_with_u_part(n3):
    ops, spec = n3
    tg = make_time_grid(3.0, ops.h)
    v = integrate(ops, None, Forcing(np.ones(3)), tg)
    u = integrate(ops, (spec.psi[:, 1], np.zeros(3)), None, tg)
    Y = observation_Y(v, u)
    np.testing.assert_allclose(Y.samples[:, 0], (v.V[:, 0] + u.W[:, 0]) / ops.h)
    np.testing.assert_allclose(Y.samples[:, 1], (v.A[:, 0] + u.V[:, 0]) / 2)
    other = integrate(ops, None, None, make_time_grid(3.0, ops.h / 2))
    with pytest.raises(InvalidArgument):
        observation_Y(v, other)


def test_csv_output(tmp_path, n3):
    ops, spec = n3
    traj = integrate(ops, (spec.psi[:, 0], np.zeros(3)), None, make_time_grid(1.0, 0.25))
    p = tmp_path / "trace.csv"
    boundary_trace(traj).to_csv(p)
    raw = p.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert lines[0] == "t,y1,y2" and len(lines) == 6
    assert float(lines[1].split(",")[1]) == boundary_trace(traj).samples[0, 0]
    traj.to_csv(tmp_path / "W.csv")
    assert (tmp_path / "W.csv").read_text().splitlines()[0] == "t,W_1,W_2,W_3"
