import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mixedwave.errors import InvalidArgument, NumericalFailure
from mixedwave.grid import (PotentialSpec, SymTriDiag, assemble, box_function_values, build_grid,
                            constant_potential, energy_norm_1M, half_window_integrals, m_norm,
                            one_norm, project_p1, project_p2, project_p3, simpson, tridiag_solve)
from mixedwave.presets import smooth_sine_potential, step_potential

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_build_grid_small():
    g = build_grid(3)
    assert g.h == 0.25
    np.testing.assert_array_equal(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert build_grid(9).h == pytest.approx(0.1, abs=1e-17)
    assert build_grid(999).h == pytest.approx(1e-3, abs=1e-18)


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_build_grid_rejects(bad):
    with pytest.raises(InvalidArgument):
        build_grid(bad)


@given(st.integers(1, 5000))
def test_grid_invariants(N):
    g = build_grid(N)
    assert abs(g.h * (N + 1) - 1.0) <= np.spacing(1.0)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 1.0
    assert np.all(np.diff(g.nodes) > 0)


def test_assemble_stencils_n3():
    ops = assemble(build_grid(3), constant_potential(0))
    np.testing.assert_allclose(ops.M.to_dense(), 0.25 / 4 * np.array([[2, 1, 0], [1, 2, 1], [0, 1, 2]]))
    np.testing.assert_allclose(ops.K.to_dense(), 4 * np.array([[2, -1, 0], [-1, 2, -1], [0, -1, 2]]))
    np.testing.assert_array_equal(ops.L, 0)
    ops1 = assemble(build_grid(3), constant_potential(1))
    np.testing.assert_allclose(ops1.L, [0.25] * 3)
    np.testing.assert_allclose(ops1.S.to_dense(), ops1.K.to_dense() + np.diag(ops1.L))


def test_assemble_sine_potential_entry():
    ops = assemble(build_grid(3), smooth_sine_potential())
    assert ops.L[0] == pytest.approx(0.375, rel=1e-15)


def test_assemble_rejects_negative_potential():
    neg = PotentialSpec(lambda x: x - 0.5)
    with pytest.raises(InvalidArgument):
        assemble(build_grid(9), neg)


def test_norm_examples():
    ops = assemble(build_grid(3), constant_potential(0))
    e1 = np.array([1.0, 0, 0])
    assert m_norm(ops, e1) == pytest.approx(np.sqrt(0.125), rel=1e-15)
    assert one_norm(ops, e1) == pytest.approx(np.sqrt(8.0), rel=1e-15)
    z = np.zeros(3)
    assert m_norm(ops, z) == one_norm(ops, z) == energy_norm_1M(ops, z, z) == 0.0
    with pytest.raises(InvalidArgument):
        m_norm(ops, np.ones(4))
    with pytest.raises(InvalidArgument):
        energy_norm_1M(ops, z, np.ones(2))


@given(st.integers(1, 60), st.integers(0, 2 ** 32 - 1))
def test_forms_match_dense(N, seed):
    rng = np.random.default_rng(seed)
    ops = assemble(build_grid(N), smooth_sine_potential())
    W = rng.standard_normal(N)
    for T, form in ((ops.M, ops.m_form), (ops.S, ops.s_form)):
        dense = W @ T.to_dense() @ W
        assert form(W) == pytest.approx(dense, rel=1e-11)
        assert T.quad(W) == pytest.approx(dense, rel=1e-11)


@given(st.integers(1, 60), st.integers(0, 2 ** 32 - 1))
def test_symmetry_and_positivity(N, seed):
    rng = np.random.default_rng(seed)
    ops = assemble(build_grid(N), step_potential())
    U, W = rng.standard_normal(N), rng.standard_normal(N)
    for T in (ops.M, ops.S):
        a, b = (T @ U) @ W, U @ (T @ W)
        assert a == pytest.approx(b, rel=1e-13, abs=1e-13 * np.linalg.norm(U) * np.linalg.norm(W))
    assert m_norm(ops, W) > 0 and one_norm(ops, W) > 0


@pytest.mark.parametrize("N", [9, 19, 39, 79])
def test_discrete_poincare(N):
    rng = np.random.default_rng(N)
    ops = assemble(build_grid(N))
    h = ops.h
    c = 4.0 / h * np.sin(np.pi * h / 2) ** 2
    W = rng.standard_normal((N, 100))
    assert np.all(ops.K.quad(W) >= c * np.sum(W ** 2, axis=0) * (1 - 1e-12))


@pytest.mark.parametrize("N", [1, 3, 9, 50])
def test_mass_matrix_smallest_eigenvalue(N):
    ops = assemble(build_grid(N))
    h = ops.h
    lam = np.linalg.eigvalsh(ops.M.to_dense())[0]
    assert lam == pytest.approx(h * np.cos(N * np.pi * h / 2) ** 2, rel=1e-9)
    assert lam > 0


def test_tridiag_examples():
    I = SymTriDiag(np.ones(4), np.zeros(3))
    r = np.array([1.0, -2.0, 3.0, 4.0])
    np.testing.assert_array_equal(tridiag_solve(I, r), r)
    ops = assemble(build_grid(3))
    rhs = ops.M @ np.ones(3)
    np.testing.assert_allclose(rhs, [0.1875, 0.25, 0.1875], rtol=1e-15)
    np.testing.assert_allclose(tridiag_solve(ops.M, rhs), np.ones(3), rtol=1e-14)
    np.testing.assert_array_equal(tridiag_solve(ops.M, np.zeros(3)), 0)


def test_tridiag_rejects_indefinite():
    with pytest.raises(NumericalFailure):
        tridiag_solve(SymTriDiag(np.array([1.0, -1.0]), np.array([0.5])), np.ones(2))


@settings(max_examples=50)
@given(st.integers(2, 200), st.integers(0, 2 ** 32 - 1))
def test_tridiag_solve_residual(N, seed):
    rng = np.random.default_rng(seed)
    off = rng.uniform(-1, 1, N - 1)
    diag = np.abs(np.concatenate([[0], off])) + np.abs(np.concatenate([off, [0]])) + rng.uniform(0.1, 2, N)
    T = SymTriDiag(diag, off)
    rhs = rng.standard_normal(N)
    x = tridiag_solve(T, rhs)
    assert np.linalg.norm(T @ x - rhs) <= 1e-12 * np.linalg.norm(rhs)


@given(arrays(float, 4, elements=st.floats(-10, 10)))
def test_simpson_exact_for_cubics(c):
    poly = np.polynomial.Polynomial(c)
    exact = poly.integ()(0.7) - poly.integ()(0.1)
    assert simpson(poly, 0.1, 0.7, 4) == pytest.approx(exact, rel=1e-12, abs=1e-12)


def test_projection_examples():
    g = build_grid(3)
    np.testing.assert_allclose(project_p1(lambda x: x * (1 - x), g), [0.1875, 0.25, 0.1875])
    one = lambda x: np.ones_like(x)
    np.testing.assert_allclose(project_p3(one, build_grid(7)), np.ones(7), rtol=1e-14)
    # M V = h * P3(1) = h: interior rows of M sum to h, boundary rows to 3h/4,
    # so the end coefficients exceed one
    ops = assemble(build_grid(7))
    V = project_p2(one, ops)
    np.testing.assert_allclose(ops.M @ V, np.full(7, ops.h), rtol=1e-13)
    assert V[0] > 1 and V[-1] > 1


def test_half_window_integrals_split_at_jumps():
    g = build_grid(3)
    step = lambda x: np.where(x < 0.4, 1.0, 0.0)
    I = half_window_integrals(step, g, breaks=(0.4,))
    # 1/2 int over (0, .5), (.25, .75), (.5, 1)
    np.testing.assert_allclose(I, [0.2, 0.075, 0.0], atol=1e-15)


def test_box_function_values():
    np.testing.assert_allclose(box_function_values(np.array([2.0, 4.0])), [1.0, 3.0, 2.0])


def _h1_error_p1(N):
    g = build_grid(N)
    vals = np.concatenate([[0], project_p1(lambda x: np.sin(np.pi * x), g), [0]])
    slope = np.diff(vals) / g.h
    # int over each cell of (pi cos(pi x) - slope)^2, by fine Simpson
    err = 0.0
    for i in range(N + 1):
        err += simpson(lambda x: (np.pi * np.cos(np.pi * x) - slope[i]) ** 2,
                       g.nodes[i], g.nodes[i + 1], 16)
    return np.sqrt(err)


def test_p1_h1_error_halves():
    errs = [_h1_error_p1(N) for N in (9, 19, 39, 79)]
    for a, b in zip(errs, errs[1:]):
        assert b <= 0.5 * a * 1.02


def _l2_err(model_cells, grid, v):
    err = 0.0
    for i in range(grid.N + 1):
        err += simpson(lambda x: (v(x) - model_cells[i]) ** 2, grid.nodes[i], grid.nodes[i + 1], 16)
    return np.sqrt(err)


def test_p2_p3_errors_decrease():
    v = lambda x: x ** 2
    e2, e3 = [], []
    for N in (9, 19, 39, 79, 159):
        ops = assemble(build_grid(N))
        e2.append(_l2_err(box_function_values(project_p2(v, ops)), ops.grid, v))
        # P3 as box coefficients of the piecewise-constant approximation
        e3.append(_l2_err(box_function_values(project_p3(v, ops.grid)), ops.grid, v))
    assert all(b < a for a, b in zip(e2, e2[1:]))
    assert all(b < a for a, b in zip(e3, e3[1:]))
