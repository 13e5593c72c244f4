"""
Uniform grid, mixed finite element operators and discrete projections
=====================================================================

Displacements live on the hat functions ``phi_j`` (P1, nodal values) and
velocities on the half-height box functions ``psi_j`` which equal 1/2 on
``(x_{j-1}, x_{j+1})``.  This gives three N x N operators:

    M = h/4 * tridiag(1, 2, 1)      (psi_i, psi_j)_{L^2}
    K = 1/h * tridiag(-1, 2, -1)    (phi_i', phi_j')_{L^2}
    L = h * diag(a(x_j))            trapezoidal lumping of the potential

All matrices are kept as stencil arrays (``SymTriDiag``); nothing here is dense.
"""

from dataclasses import dataclass, field
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.linalg import lapack

from .errors import InvalidArgument, NumericalFailure

# Simpson subintervals per mesh cell (must be even)
SIMPSON_PANELS = 32


@dataclass(frozen=True)
class Grid:
    """Uniform partition of [0, 1] with ``N`` interior nodes."""
    N: int
    h: float
    nodes: np.ndarray = field(repr=False)

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]


def build_grid(N: int) -> Grid:
    if int(N) != N or N < 1:
        raise InvalidArgument(f"N must be a positive integer, got {N!r}")
    N = int(N)
    h = 1.0 / (N + 1)
    nodes = np.arange(N + 2) * h
    nodes[-1] = 1.0
    nodes.setflags(write=False)
    return Grid(N=N, h=h, nodes=nodes)


def grid_for_h(h: float) -> Grid:
    """Grid whose mesh size is the closest 1/(N+1) to ``h``."""
    return build_grid(max(1, int(round(1.0 / h)) - 1))


@dataclass(frozen=True)
class PotentialSpec:
    """Nonnegative potential a(x) on [0, 1].

    ``func`` must accept numpy arrays.  ``kind`` is one of ``smooth-formula``,
    ``piecewise-constant`` or ``tabulated``.  ``discontinuities`` lists jump
    points inside (0, 1); quadrature splits cells there.
    """
    func: Callable[[np.ndarray], np.ndarray]
    kind: str = "smooth-formula"
    a_max: float = 0.0
    discontinuities: Tuple[float, ...] = ()
    name: str = "custom"

    def __call__(self, x):
        return np.broadcast_to(np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float),
                               np.shape(x)).copy()


def constant_potential(c: float) -> PotentialSpec:
    c = float(c)
    return PotentialSpec(lambda x: np.full(np.shape(x), c), kind="smooth-formula",
                         a_max=abs(c), name=f"constant {c:g}")


# ---------------------------------------------------------------------------
# Tridiagonal storage and solves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymTriDiag:
    """Symmetric tridiagonal matrix stored as its diagonal and off-diagonal."""
    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        o = np.asarray(self.off, dtype=float)
        if d.ndim != 1 or o.shape != (max(d.size - 1, 0),):
            raise InvalidArgument("off-diagonal must have length len(diag) - 1")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "off", o)

    @property
    def n(self) -> int:
        return self.diag.size

    def __add__(self, other: "SymTriDiag") -> "SymTriDiag":
        return SymTriDiag(self.diag + other.diag, self.off + other.off)

    def scaled(self, s: float) -> "SymTriDiag":
        return SymTriDiag(s * self.diag, s * self.off)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Product with a vector or with the columns of an (n, m) array."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise InvalidArgument(f"expected leading dimension {self.n}, got {x.shape[0]}")
        d = self.diag if x.ndim == 1 else self.diag[:, None]
        o = self.off if x.ndim == 1 else self.off[:, None]
        y = d * x
        y[:-1] += o * x[1:]
        y[1:] += o * x[:-1]
        return y

    __matmul__ = matvec

    def quad(self, x: np.ndarray):
        """x^T T x; columnwise for 2-D input."""
        x = np.asarray(x, dtype=float)
        q = np.sum(x * self.matvec(x), axis=0)
        return float(q) if x.ndim == 1 else q

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def factor(self) -> "TridiagFactor":
        return TridiagFactor(self)


class TridiagFactor:
    """LDL^T factorization of a positive definite ``SymTriDiag`` (LAPACK ?pttrf)."""

    def __init__(self, T: SymTriDiag):
        d, e, info = lapack.dpttrf(T.diag, T.off)
        if info != 0:
            raise NumericalFailure(f"non-positive pivot at row {abs(info)} in tridiagonal factorization")
        self.n = T.n
        self._d = d
        self._e = e

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n:
            raise InvalidArgument(f"rhs has leading dimension {rhs.shape[0]}, expected {self.n}")
        x, info = lapack.dpttrs(self._d, self._e, rhs)
        if info != 0:
            raise NumericalFailure(f"tridiagonal solve failed (info={info})")
        return x


def tridiag_solve(T, rhs: np.ndarray) -> np.ndarray:
    """Solve ``T x = rhs`` for symmetric positive definite tridiagonal ``T``."""
    factor = T if isinstance(T, TridiagFactor) else TridiagFactor(T)
    return factor.solve(rhs)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorSet:
    grid: Grid
    potential: PotentialSpec
    M: SymTriDiag
    K: SymTriDiag
    L: np.ndarray
    S: SymTriDiag

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def a_nodes(self) -> np.ndarray:
        return self.L / self.h

    def m_factor(self) -> TridiagFactor:
        return _cached_factor(self, "_m_factor", self.M)

    def s_factor(self) -> TridiagFactor:
        return _cached_factor(self, "_s_factor", self.S)

    def m_form(self, W: np.ndarray) -> np.ndarray:
        """<M W, W> as h/4 * sum (w_j + w_{j+1})^2 (columnwise for 2-D input)."""
        P = _pad(W)
        return self.h / 4.0 * np.sum((P[1:] + P[:-1]) ** 2, axis=0)

    def s_form(self, W: np.ndarray) -> np.ndarray:
        """<(K + L) W, W> as a sum of squared differences plus the potential term."""
        P = _pad(W)
        k = np.sum(np.diff(P, axis=0) ** 2, axis=0) / self.h
        L = self.L if np.ndim(W) == 1 else self.L[:, None]
        return k + np.sum(L * np.asarray(W) ** 2, axis=0)


def _cached_factor(ops, attr, T):
    f = ops.__dict__.get(attr)
    if f is None:
        f = TridiagFactor(T)
        object.__setattr__(ops, attr, f)
    return f


def _pad(W):
    W = np.asarray(W, dtype=float)
    z = np.zeros((1,) + W.shape[1:])
    return np.concatenate([z, W, z], axis=0)


def mass_matrix(grid: Grid) -> SymTriDiag:
    h = grid.h
    return SymTriDiag(np.full(grid.N, h / 2.0), np.full(grid.N - 1, h / 4.0))


def stiffness_matrix(grid: Grid) -> SymTriDiag:
    h = grid.h
    return SymTriDiag(np.full(grid.N, 2.0 / h), np.full(grid.N - 1, -1.0 / h))


def assemble(grid: Grid, a: PotentialSpec = None) -> OperatorSet:
    if a is None:
        a = constant_potential(0.0)
    a_j = a(grid.interior)
    if np.any(~np.isfinite(a_j)):
        raise InvalidArgument("potential is not finite on the grid")
    if np.any(a_j < 0):
        j = int(np.argmax(a_j < 0)) + 1
        raise InvalidArgument(f"potential must be nonnegative; a(x_{j}) = {a_j[j - 1]:g}")
    M = mass_matrix(grid)
    K = stiffness_matrix(grid)
    L = grid.h * a_j
    L.setflags(write=False)
    S = SymTriDiag(K.diag + L, K.off)
    return OperatorSet(grid=grid, potential=a, M=M, K=K, L=L, S=S)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def _check_len(ops, *vectors):
    for v in vectors:
        if np.shape(v) != (ops.N,):
            raise InvalidArgument(f"expected a vector of length {ops.N}, got shape {np.shape(v)}")


def m_norm(ops: OperatorSet, W) -> float:
    _check_len(ops, W)
    return float(np.sqrt(ops.m_form(W)))


def one_norm(ops: OperatorSet, W) -> float:
    _check_len(ops, W)
    return float(np.sqrt(ops.s_form(W)))


def energy_norm_1M(ops: OperatorSet, W0, W1) -> float:
    _check_len(ops, W0, W1)
    return float(np.sqrt(ops.s_form(W0) + ops.m_form(W1)))


# ---------------------------------------------------------------------------
# Quadrature and projections
# ---------------------------------------------------------------------------

def simpson(func: Callable, a: float, b: float, panels: int = SIMPSON_PANELS) -> float:
    """Composite Simpson rule; endpoints are nudged inward so one-sided limits
    are used at jump points."""
    if b <= a:
        return 0.0
    panels += panels % 2
    x = np.linspace(a, b, panels + 1)
    x[0] = np.nextafter(a, b)
    x[-1] = np.nextafter(b, a)
    y = np.asarray(func(x), dtype=float)
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((b - a) / (3.0 * panels) * (w @ y))


def cell_integrals(func: Callable, nodes: np.ndarray, breaks: Sequence[float] = (),
                   panels: int = SIMPSON_PANELS) -> np.ndarray:
    """Integrals of ``func`` over each cell [x_i, x_{i+1}].

    Cells containing a break point are split there and each piece gets its own
    ``panels``-interval Simpson rule.
    """
    nodes = np.asarray(nodes, dtype=float)
    a, b = nodes[:-1], nodes[1:]
    panels += panels % 2
    t = np.linspace(0.0, 1.0, panels + 1)
    x = a[:, None] + (b - a)[:, None] * t[None, :]
    x[:, 0] = np.nextafter(a, b)
    x[:, -1] = np.nextafter(b, a)
    y = np.asarray(func(x.ravel()), dtype=float).reshape(x.shape)
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    out = (b - a) / (3.0 * panels) * (y @ w)
    for c in sorted(set(float(p) for p in breaks)):
        i = np.searchsorted(nodes, c, side="right") - 1
        if i < 0 or i >= len(a) or not (a[i] < c < b[i]):
            continue
        pts = [a[i]] + [p for p in sorted(breaks) if a[i] < p < b[i]] + [b[i]]
        out[i] = sum(simpson(func, lo, hi, panels) for lo, hi in zip(pts[:-1], pts[1:]))
    return out


def half_window_integrals(func: Callable, grid: Grid, breaks: Sequence[float] = ()) -> np.ndarray:
    """[1/2 * int_{x_{j-1}}^{x_{j+1}} func]_{j=1..N}."""
    I = cell_integrals(func, grid.nodes, breaks)
    return 0.5 * (I[:-1] + I[1:])


def project_p1(w: Callable, grid: Grid) -> np.ndarray:
    """Nodal interpolation onto the hat-function basis."""
    return np.asarray(w(grid.interior), dtype=float).copy()


def project_p3(v: Callable, grid: Grid, breaks: Sequence[float] = ()) -> np.ndarray:
    """Averages of ``v`` over (x_{j-1}, x_{j+1})."""
    return half_window_integrals(v, grid, breaks) / grid.h


def project_p2(v: Callable, ops: OperatorSet, breaks: Sequence[float] = ()) -> np.ndarray:
    """Coefficients of the L^2-orthogonal projection onto span{psi_j}: M V = h * P3 v."""
    return ops.m_factor().solve(half_window_integrals(v, ops.grid, breaks))


def box_function_values(coeffs: np.ndarray) -> np.ndarray:
    """Cell values of sum_j c_j psi_j: (c_i + c_{i+1}) / 2 on cell i = 0..N."""
    P = _pad(coeffs)
    return 0.5 * (P[:-1] + P[1:])
