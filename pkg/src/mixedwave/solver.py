"""
Time integration of the semi-discrete wave system

    M W'' + (K + L) W = M G(t),     G(t) = lambda(t) F

with the Newmark average-acceleration scheme (beta = 1/4, gamma = 1/2).  For
the homogeneous linear system the scheme conserves

    E = 1/2 (<M V, V> + <(K + L) W, W>)

exactly (up to rounding), which is the property the observability and
reconstruction arguments lean on.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .csvio import write_csv
from .errors import InvalidArgument
from .grid import OperatorSet, TridiagFactor


@dataclass(frozen=True)
class TimeGrid:
    T: float
    dt: float
    steps: int

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.steps + 1) * self.dt
        t[-1] = self.T
        return t

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.steps + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


def make_time_grid(T: float, dt: float) -> TimeGrid:
    """Uniform grid on [0, T] with the largest step <= ``dt`` that divides T."""
    if not (T > 0) or not (dt > 0):
        raise InvalidArgument(f"need T > 0 and dt > 0, got T={T}, dt={dt}")
    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    return TimeGrid(T=float(T), dt=float(T) / steps, steps=steps)


@dataclass(frozen=True)
class State:
    W: np.ndarray
    V: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class Forcing:
    """Separable forcing G(t) = intensity(t) * F."""
    F: np.ndarray
    intensity: Callable[[np.ndarray], np.ndarray] = None

    def values(self, t: np.ndarray) -> np.ndarray:
        if self.intensity is None:
            return np.ones_like(t)
        return np.broadcast_to(np.asarray(self.intensity(t), dtype=float), t.shape).copy()


@dataclass(frozen=True)
class Trajectory:
    time_grid: TimeGrid
    W: np.ndarray   # (steps + 1, N)
    V: np.ndarray
    A: np.ndarray

    def __len__(self):
        return self.W.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.time_grid.times

    def state(self, k: int) -> State:
        return State(self.W[k], self.V[k], self.A[k])

    @property
    def samples(self):
        return [self.state(k) for k in range(len(self))]

    def to_csv(self, path, field: str = "W") -> None:
        data = getattr(self, field)
        header = ["t"] + [f"{field}_{j}" for j in range(1, data.shape[1] + 1)]
        write_csv(path, header, np.column_stack([self.times, data]))


@dataclass(frozen=True)
class ObservationSignal:
    dt: float
    times: np.ndarray
    samples: np.ndarray   # (K + 1, 2)

    def weights(self) -> np.ndarray:
        w = np.full(len(self.times), self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def l2_norms(self) -> np.ndarray:
        """Trapezoid L^2(0, T) norm of each component."""
        return np.sqrt(self.weights() @ self.samples ** 2)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.l2_norms() ** 2)))

    def to_csv(self, path) -> None:
        write_csv(path, ["t", "y1", "y2"], np.column_stack([self.times, self.samples]))


class NewmarkScheme:
    """Average-acceleration Newmark stepping for fixed operators and step size.

    One step:

        (M + dt^2/4 S) W+ = M (W + dt V + dt^2/4 A) + dt^2/4 lam+ M F
        A+ = lam+ F - M^{-1} S W+
        V+ = V + dt/2 (A + A+)

    Arrays may carry a trailing batch dimension (columns are independent runs).
    """

    def __init__(self, ops: OperatorSet, dt: float):
        self.ops = ops
        self.dt = float(dt)
        self.c = 0.25 * self.dt ** 2
        self.P = ops.M + ops.S.scaled(self.c)
        self.P_factor = TridiagFactor(self.P)
        self.M_factor = ops.m_factor()

    def initial_acceleration(self, W0, lam0=0.0, F=None):
        A0 = -self.M_factor.solve(self.ops.S @ W0)
        if F is not None and lam0 != 0.0:
            A0 = A0 + lam0 * F
        return A0

    def march(self, W0, V0, steps: int, lam=None, F=None, record: str = "full"):
        """Advance ``steps`` steps; ``lam`` holds intensity samples at t_0..t_steps.

        ``record='full'`` returns (W, V, A) histories; ``record='boundary'``
        returns only the first-node rows (w_1, w_1', w_1'') with shape (steps + 1, ...).
        """
        M, S = self.ops.M, self.ops.S
        W = np.array(W0, dtype=float)
        V = np.array(V0, dtype=float)
        if F is not None:
            F = np.asarray(F, dtype=float)
            if lam is None:
                lam = np.ones(steps + 1)
        A = self.initial_acceleration(W, 0.0 if F is None else lam[0], F)
        MF = M @ F if F is not None else None

        shape = (steps + 1,) + (W.shape if record == "full" else W.shape[1:])
        Wh, Vh, Ah = np.empty(shape), np.empty(shape), np.empty(shape)
        keep = (lambda X: X) if record == "full" else (lambda X: X[0])
        Wh[0], Vh[0], Ah[0] = keep(W), keep(V), keep(A)
        dt, c = self.dt, self.c
        for k in range(1, steps + 1):
            rhs = M @ (W + dt * V + c * A)
            if MF is not None:
                rhs += (c * lam[k]) * MF
            W_new = self.P_factor.solve(rhs)
            A_new = -self.M_factor.solve(S @ W_new)
            if F is not None:
                A_new += lam[k] * F
            V = V + 0.5 * dt * (A + A_new)
            W, A = W_new, A_new
            Wh[k], Vh[k], Ah[k] = keep(W), keep(V), keep(A)
        return Wh, Vh, Ah


def integrate(ops: OperatorSet, initial: Tuple[np.ndarray, np.ndarray] = None,
              forcing: Optional[Forcing] = None, tg: TimeGrid = None) -> Trajectory:
    N = ops.N
    if tg is None:
        raise InvalidArgument("a TimeGrid is required")
    W0, W1 = (np.zeros(N), np.zeros(N)) if initial is None else initial
    for v in (W0, W1):
        if np.shape(v) != (N,):
            raise InvalidArgument(f"initial data must have length {N}")
    lam = F = None
    if forcing is not None:
        F = np.asarray(forcing.F, dtype=float)
        if F.shape != (N,):
            raise InvalidArgument(f"forcing shape must have length {N}")
        lam = forcing.values(tg.times)
    W, V, A = NewmarkScheme(ops, tg.dt).march(W0, W1, tg.steps, lam, F)
    return Trajectory(tg, W, V, A)


def energy(ops: OperatorSet, state: State) -> float:
    return 0.5 * float(ops.m_form(state.V) + ops.s_form(state.W))


def energy_history(ops: OperatorSet, traj: Trajectory) -> np.ndarray:
    return 0.5 * (ops.m_form(traj.V.T) + ops.s_form(traj.W.T))


def energy_bound_ratio(ops: OperatorSet, traj: Trajectory, forcing: Optional[Forcing]) -> float:
    """max_t E(t) / (E(0) + int_0^T ||G||_M^2), the measured constant of the
    a-priori energy estimate."""
    E = energy_history(ops, traj)
    src = 0.0
    if forcing is not None:
        lam = forcing.values(traj.times)
        src = float(traj.time_grid.trapezoid_weights() @ lam ** 2) * float(ops.m_form(forcing.F))
    denom = E[0] + src
    return float(E.max() / denom) if denom > 0 else 0.0


def boundary_trace(traj: Trajectory) -> ObservationSignal:
    if len(traj) == 0:
        raise InvalidArgument("empty trajectory")
    h = 1.0 / (traj.W.shape[1] + 1)
    y = np.column_stack([traj.W[:, 0] / h, traj.V[:, 0] / 2.0])
    return ObservationSignal(traj.time_grid.dt, traj.times, y)


def observation_Y(v_traj: Trajectory, u_traj: Optional[Trajectory] = None) -> ObservationSignal:
    """((v_1' + u_1) / h, (v_1'' + u_1') / 2) with v_1'' taken from the scheme's
    acceleration."""
    h = 1.0 / (v_traj.W.shape[1] + 1)
    y1 = v_traj.V[:, 0].copy()
    y2 = v_traj.A[:, 0].copy()
    if u_traj is not None:
        if u_traj.time_grid != v_traj.time_grid or u_traj.W.shape != v_traj.W.shape:
            raise InvalidArgument("v and u trajectories must share grid and time grid")
        y1 += u_traj.W[:, 0]
        y2 += u_traj.V[:, 0]
    return ObservationSignal(v_traj.time_grid.dt, v_traj.times, np.column_stack([y1 / h, y2 / 2.0]))
