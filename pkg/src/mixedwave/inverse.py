"""
Inverse source problem: recover F in

    M V'' + (K + L) V = lambda(t) M F,   V(0) = V'(0) = 0

from the boundary signal Y = ((v_1' + u_1) / h, (v_1'' + u_1') / 2), where U
is the homogeneous solution carrying the (known) initial data.

The misfit J(F) = 1/2 ||Y(F) - y||^2 (trapezoid rule in time) is quadratic in
F.  Its gradient is computed exactly for the time-discrete scheme by a
reverse sweep through the Newmark recursion, and J is minimized by conjugate
gradients with exact line search.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .csvio import write_csv
from .errors import InvalidArgument
from .grid import (OperatorSet, assemble, box_function_values, build_grid,
                   cell_integrals, half_window_integrals)
from .solver import NewmarkScheme, ObservationSignal, TimeGrid, make_time_grid

DEFAULT_GTOL = 1e-6
L2_ERROR_POINTS = 10_000


@dataclass(frozen=True)
class SourceSpec:
    func: Callable[[np.ndarray], np.ndarray]
    discontinuities: Tuple[float, ...] = ()
    description: str = "custom"

    def __post_init__(self):
        d = tuple(sorted(float(p) for p in self.discontinuities))
        if any(not (0.0 < p < 1.0) for p in d):
            raise InvalidArgument("discontinuities must lie inside (0, 1)")
        object.__setattr__(self, "discontinuities", d)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.func(x), dtype=float), x.shape).copy()


@dataclass(frozen=True)
class DisplacementData:
    """Initial displacement w0 together with its derivative w0_x."""
    func: Callable
    deriv: Optional[Callable] = None


def constant_intensity(t):
    return np.ones_like(np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# Discretization of data
# ---------------------------------------------------------------------------

def _breaks(ops, extra=()):
    return tuple(ops.potential.discontinuities) + tuple(extra)


def discretize_source(f: SourceSpec, ops: OperatorSet) -> np.ndarray:
    """F with M F = [1/2 int_{x_{j-1}}^{x_{j+1}} f]_j."""
    if not isinstance(f, SourceSpec):
        f = SourceSpec(f)
    rhs = half_window_integrals(f, ops.grid, f.discontinuities)
    return ops.m_factor().solve(rhs)


def discretize_initial_data(w0: Optional[DisplacementData], w1: Optional[Callable],
                            ops: OperatorSet):
    """(U0, U1) with U0_j = w1(x_j) and M U1 = [1/2 int (w0_xx - a w0)]_j.

    The second-derivative integral is evaluated as w0_x(x_{j+1}) - w0_x(x_{j-1}).
    """
    grid = ops.grid
    U0 = np.zeros(grid.N) if w1 is None else np.asarray(w1(grid.interior), dtype=float).copy()
    if w0 is None:
        return U0, np.zeros(grid.N)
    if callable(w0) and not isinstance(w0, DisplacementData):
        raise InvalidArgument("initial displacement needs its derivative (use DisplacementData)")
    if w0.deriv is None:
        raise InvalidArgument("initial displacement derivative w0_x is required")
    x = grid.nodes
    dx = np.asarray(w0.deriv(x), dtype=float)
    rhs = 0.5 * (dx[2:] - dx[:-2])
    a = ops.potential
    rhs -= half_window_integrals(lambda s: a(s) * np.asarray(w0.func(s), dtype=float),
                                 grid, _breaks(ops))
    return U0, ops.m_factor().solve(rhs)


# ---------------------------------------------------------------------------
# Problem setup and the forward map
# ---------------------------------------------------------------------------

class InverseSetup:
    """Everything about the reconstruction except the data: mesh, potential,
    intensity, observation time, step and initial data."""

    def __init__(self, ops: OperatorSet, T: float = 3.0, dt: Optional[float] = None,
                 intensity: Callable = constant_intensity,
                 w0: Optional[DisplacementData] = None, w1: Optional[Callable] = None):
        if not T > 0:
            raise InvalidArgument(f"T must be positive, got {T}")
        self.ops = ops
        self.intensity = intensity
        self.tg: TimeGrid = make_time_grid(T, ops.h if dt is None else dt)
        self.lam = np.asarray(intensity(self.tg.times), dtype=float) * np.ones(self.tg.steps + 1)
        if self.lam[0] == 0:
            raise InvalidArgument("the intensity must not vanish at t = 0")
        self.w0, self.w1 = w0, w1
        self.U0, self.U1 = discretize_initial_data(w0, w1, ops)
        self.scheme = NewmarkScheme(ops, self.tg.dt)
        self.weights = self.tg.trapezoid_weights()
        self._u_part = None

    @property
    def T(self) -> float:
        return self.tg.T

    @property
    def N(self) -> int:
        return self.ops.N

    def u_part(self) -> np.ndarray:
        """(u_1 / h, u_1' / 2) of the homogeneous solution carrying the initial data."""
        if self._u_part is None:
            K = self.tg.steps + 1
            if not (np.any(self.U0) or np.any(self.U1)):
                self._u_part = np.zeros((K, 2))
            else:
                w, v, _ = self.scheme.march(self.U0, self.U1, self.tg.steps, record="boundary")
                self._u_part = np.column_stack([w / self.ops.h, v / 2.0])
        return self._u_part

    def observe_linear(self, F: np.ndarray) -> np.ndarray:
        """Source-driven part (v_1'/h, v_1''/2); shape (K, 2) or (K, 2, m) for batched F."""
        F = np.asarray(F, dtype=float)
        Z = np.zeros_like(F)
        _, v, a = self.scheme.march(Z, Z, self.tg.steps, self.lam, F, record="boundary")
        return np.stack([v / self.ops.h, a / 2.0], axis=1)

    def observe(self, F: np.ndarray) -> np.ndarray:
        Y = self.observe_linear(F)
        u = self.u_part()
        return Y + (u if Y.ndim == 2 else u[:, :, None])

    def signal(self, F: np.ndarray) -> ObservationSignal:
        return ObservationSignal(self.tg.dt, self.tg.times, self.observe(F))

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        """Transpose of ``observe_linear`` applied to g (shape (K, 2)).

        Reverse sweep through the Newmark recursion:  with totals (W^, V^, A^)
        at step k, the update A_k = lam_k F - M^{-1} S W_k, V_k = V_{k-1} +
        dt/2 (A_{k-1} + A_k) and P W_k = M (W_{k-1} + dt V_{k-1} + c A_{k-1})
        + c lam_k M F are transposed one at a time.
        """
        ops, sch = self.ops, self.scheme
        M, S = ops.M, ops.S
        dt, c, lam = sch.dt, sch.c, self.lam
        g1 = g[:, 0] / ops.h
        g2 = g[:, 1] / 2.0
        N = ops.N
        Wb, Vb, Ab = np.zeros(N), np.zeros(N), np.zeros(N)
        Fb = np.zeros(N)
        for k in range(self.tg.steps, 0, -1):
            Vb[0] += g1[k]
            Ab[0] += g2[k]
            Ab = Ab + 0.5 * dt * Vb
            Fb += lam[k] * Ab
            Wb = Wb - S @ sch.M_factor.solve(Ab)
            q = M @ sch.P_factor.solve(Wb)
            Fb += (c * lam[k]) * q
            Ab = 0.5 * dt * Vb + c * q
            Vb = Vb + dt * q
            Wb = q
        Ab[0] += g2[0]
        Fb += lam[0] * Ab
        return Fb


def same_mesh_observation(setup: InverseSetup, F: np.ndarray) -> "SyntheticObservation":
    """Clean data generated by the inversion's own discretization (tests only)."""
    sig = setup.signal(F)
    return SyntheticObservation(signal=sig, clean=sig, N_fine=setup.N, delta=0.0, seed=None)


# ---------------------------------------------------------------------------
# Synthetic observations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticObservation:
    signal: ObservationSignal
    clean: ObservationSignal
    N_fine: int
    delta: float
    seed: Optional[int]

    @property
    def samples(self) -> np.ndarray:
        return self.signal.samples


def make_rng(seed: int, *stream) -> np.random.Generator:
    """PCG64 generator seeded by hashing (seed, *stream) through SeedSequence."""
    keys = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for s in stream:
        if isinstance(s, str):
            keys.append(int.from_bytes(s.encode("utf-8")[:16].ljust(16, b"\0"), "little"))
        else:
            keys.append(int(round(float(s) * 1e6)) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(keys)))


def add_noise(y: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """y (1 + delta zeta), zeta i.i.d. standard normal per sample and component."""
    if delta == 0:
        return y.copy()
    return y * (1.0 + delta * rng.standard_normal(y.shape))


def synthesize_observation(setup: InverseSetup, f_true: SourceSpec, N_fine: Optional[int] = None,
                           delta: float = 0.0, seed: int = 0, fine_factor: int = 4,
                           rng: Optional[np.random.Generator] = None) -> SyntheticObservation:
    """Boundary data from a finer mesh, resampled onto the setup's time grid.

    The second component is set to zero (the continuous observation has no
    counterpart to the mass-matrix term).  With ``delta > 0`` each sample is
    multiplied by (1 + delta zeta_k).
    """
    N = setup.N
    min_fine = 4 * (N + 1) - 1
    if N_fine is None:
        N_fine = fine_factor * (N + 1) - 1
    if N_fine < min_fine:
        raise InvalidArgument(f"N_fine={N_fine} is not at least 4x finer than N={N} (need >= {min_fine})")
    if delta < 0:
        raise InvalidArgument("noise level must be nonnegative")
    fine_ops = assemble(build_grid(N_fine), setup.ops.potential)
    fine = InverseSetup(fine_ops, T=setup.T, dt=fine_ops.h, intensity=setup.intensity,
                        w0=setup.w0, w1=setup.w1)
    Y = fine.observe(discretize_source(f_true, fine_ops))
    t = setup.tg.times
    y = np.zeros((t.size, 2))
    y[:, 0] = np.interp(t, fine.tg.times, Y[:, 0])
    clean = ObservationSignal(setup.tg.dt, t, y)
    if rng is None:
        rng = make_rng(seed)
    noisy = ObservationSignal(setup.tg.dt, t, add_noise(y, delta, rng))
    return SyntheticObservation(signal=noisy, clean=clean, N_fine=N_fine, delta=float(delta), seed=seed)


def _samples(y) -> np.ndarray:
    if isinstance(y, SyntheticObservation):
        return y.signal.samples
    if isinstance(y, ObservationSignal):
        return y.samples
    return np.asarray(y, dtype=float)


# ---------------------------------------------------------------------------
# Functional, gradient, minimization
# ---------------------------------------------------------------------------

def functional_J(F, y, setup: InverseSetup) -> float:
    r = setup.observe(F) - _samples(y)
    return 0.5 * float(setup.weights @ np.sum(r ** 2, axis=1))


def gradient_J(F, y, setup: InverseSetup) -> np.ndarray:
    r = setup.observe(F) - _samples(y)
    return setup.adjoint(setup.weights[:, None] * r)


@dataclass
class ReconstructionResult:
    F: np.ndarray
    iterations: int
    grad_norm: float
    J: float
    converged: bool
    l2_error: float = float("nan")
    m_error: float = float("nan")
    l2_error_box: float = float("nan")
    history: list = field(default_factory=list, repr=False)


def reconstruct(setup: InverseSetup, y, gtol: float = DEFAULT_GTOL, max_iter: Optional[int] = None,
                f_true: Optional[SourceSpec] = None, F0: Optional[np.ndarray] = None,
                precondition: bool = False) -> ReconstructionResult:
    """Conjugate gradients on the quadratic J with exact line search.

    Stops once the Euclidean gradient norm is <= ``gtol`` or after ``max_iter``
    (default 10 N) iterations; the latter is reported as non-converged.
    Search directions use the Euclidean gradient; with ``precondition`` they
    use the M-weighted gradient M^{-1} grad J instead.  The minimizer is the
    same, but the M-weighted path excites the checkerboard mode (M's smallest
    eigenvector) that the data barely see, so the nodal values come out rougher.
    """
    if setup.T < 2:
        warnings.warn(f"observation time T={setup.T} is below 2; the problem may be poorly observable")
    N = setup.N
    if max_iter is None:
        max_iter = 10 * N
    d = _samples(y)
    w = setup.weights[:, None]
    Mf = setup.ops.m_factor()
    F = np.zeros(N) if F0 is None else np.array(F0, dtype=float)

    def restart(F):
        r = setup.observe(F) - d
        return r, setup.adjoint(w * r)

    r, g = restart(F)
    z = Mf.solve(g) if precondition else g.copy()
    p = -z
    gz = g @ z
    history = []
    it = 0
    since_restart = 0
    while True:
        gnorm = float(np.linalg.norm(g))
        history.append(gnorm)
        if gnorm <= gtol:
            # confirm against a freshly computed gradient
            r, g = restart(F)
            gnorm = float(np.linalg.norm(g))
            if gnorm <= gtol:
                break
            z = Mf.solve(g) if precondition else g.copy()
            p, gz, since_restart = -z, g @ z, 0
        if it >= max_iter:
            break
        Ap = setup.observe_linear(p)
        pHp = float(setup.weights @ np.sum(Ap ** 2, axis=1))
        if pHp <= 0:
            break
        alpha = -(g @ p) / pHp
        F = F + alpha * p
        r = r + alpha * Ap
        g = g + alpha * setup.adjoint(w * Ap)
        it += 1
        since_restart += 1
        if since_restart >= max(50, N):
            r, g = restart(F)
            since_restart = 0
            z = Mf.solve(g) if precondition else g.copy()
            p, gz = -z, g @ z
            continue
        z = Mf.solve(g) if precondition else g.copy()
        gz_new = g @ z
        p = -z + (gz_new / gz) * p
        gz = gz_new

    J = 0.5 * float(setup.weights @ np.sum(r ** 2, axis=1))
    res = ReconstructionResult(F=F, iterations=it, grad_norm=gnorm, J=J,
                               converged=gnorm <= gtol, history=history)
    if f_true is not None:
        res.l2_error = l2_error(f_true, F, setup.ops)
        res.l2_error_box = l2_error_box(f_true, F, setup.ops)
        res.m_error = float(np.sqrt(setup.ops.m_form(F - discretize_source(f_true, setup.ops))))
    return res


def _l2_distance(f_true, F, ops, model):
    grid = ops.grid
    if not isinstance(f_true, SourceSpec):
        f_true = SourceSpec(f_true)
    nodes = grid.nodes

    def sq_err(x):
        return (f_true(x) - model(x)) ** 2

    panels = max(8, int(math.ceil(L2_ERROR_POINTS / (grid.N + 1))))
    return float(np.sqrt(np.sum(cell_integrals(sq_err, nodes, f_true.discontinuities, panels))))


def l2_error(f_true: SourceSpec, F: np.ndarray, ops: OperatorSet) -> float:
    """L^2(0,1) distance between f_true and the continuous piecewise-linear
    function through (x_j, F_j), with zero end values.

    Composite Simpson on about ``L2_ERROR_POINTS`` points, split at cell nodes
    and at the source's declared jumps.
    """
    values = np.concatenate([[0.0], np.asarray(F, dtype=float), [0.0]])
    return _l2_distance(f_true, F, ops, lambda x: np.interp(x, ops.grid.nodes, values))


def l2_error_box(f_true: SourceSpec, F: np.ndarray, ops: OperatorSet) -> float:
    """L^2(0,1) distance between f_true and the box-function expansion sum_j F_j psi_j."""
    cells = box_function_values(F)
    nodes = ops.grid.nodes

    def model(x):
        return cells[np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, ops.N)]

    return _l2_distance(f_true, F, ops, model)


def stability_constant(setup: InverseSetup, samples: int = 0, seed: int = 0) -> float:
    """max ||F||_M / ||Y(F)|| over F.

    With ``samples == 0`` the exact value from the observation Gram matrix is
    returned; otherwise the maximum over ``samples`` random directions.
    """
    N = setup.N
    if samples:
        rng = make_rng(seed, "stability")
        F = rng.standard_normal((N, samples))
        Y = setup.observe_linear(F)
        num = setup.ops.m_form(F)
        den = np.einsum("k,kcm->m", setup.weights, Y ** 2)
        return float(np.sqrt(np.max(num / den)))
    Y = setup.observe_linear(np.eye(N))
    G = np.einsum("k,kci,kcj->ij", setup.weights, Y, Y)
    lam_min = sla.eigh(G, setup.ops.M.to_dense(), eigvals_only=True, subset_by_index=[0, 0])[0]
    return float(1.0 / np.sqrt(lam_min))


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

RESULT_HEADER = ["h", "T", "delta", "source", "potential", "l2_error", "m_error",
                 "iters", "grad_norm", "J", "l2_error_box", "converged"]


def result_row(res: ReconstructionResult, setup: InverseSetup, delta: float,
               source: str, potential: str) -> list:
    return [setup.ops.h, setup.T, float(delta), source, potential, res.l2_error,
            res.m_error, res.iterations, res.grad_norm, res.J, res.l2_error_box, res.converged]


def write_results(path, rows) -> None:
    write_csv(path, RESULT_HEADER, rows)


def write_profile(path, F: np.ndarray, ops: OperatorSet) -> None:
    """Recovered source sum_j F_j psi_j sampled at cell midpoints."""
    x = 0.5 * (ops.grid.nodes[:-1] + ops.grid.nodes[1:])
    write_csv(path, ["x", "value"], np.column_stack([x, box_function_values(F)]))
