"""
Empirical observability constant of the semi-discrete wave system.

For homogeneous data (W0, W1) the quotient

    int_0^T |u_1 / h|^2 + |u_1' / 2|^2 dt  /  (<S W0, W0> + <M W1, W1>)

is evaluated with the Newmark scheme and trapezoid quadrature.  Writing the
data in eigen coordinates, W0 = sum alpha_n psi_n / sqrt(mu_n) and
W1 = sum beta_n psi_n, the denominator is |alpha|^2 + |beta|^2, so every
quotient is a Rayleigh quotient of one 2N x 2N Gram matrix G.  The search
strategies differ only in which part of G they look at.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .csvio import write_csv
from .errors import InvalidArgument
from .grid import OperatorSet, assemble, build_grid
from .inverse import make_rng
from .solver import NewmarkScheme, make_time_grid
from .spectral import Spectrum, generalized_eigen

DEFAULT_T = 3.0
STRATEGIES = ("eigenmodes", "random", "rayleigh")


def quotient_dt(h: float, T: float) -> float:
    return min(h, T / 3000.0)


def _boundary_series(ops, W0, W1, T, dt):
    tg = make_time_grid(T, quotient_dt(ops.h, T) if dt is None else dt)
    w, v, _ = NewmarkScheme(ops, tg.dt).march(W0, W1, tg.steps, record="boundary")
    return tg.trapezoid_weights(), w / ops.h, v / 2.0


def observability_quotient(ops: OperatorSet, W0, W1, T: float = DEFAULT_T,
                           dt: Optional[float] = None, first_term_only: bool = False):
    """Observation energy over datum energy.  2-D (N, m) data give m quotients."""
    W0 = np.asarray(W0, dtype=float)
    W1 = np.asarray(W1, dtype=float)
    if not T > 0:
        raise InvalidArgument(f"T must be positive, got {T}")
    if W0.shape != W1.shape or W0.shape[0] != ops.N:
        raise InvalidArgument(f"data must have leading dimension {ops.N} and equal shapes")
    denom = ops.s_form(W0) + ops.m_form(W1)
    if np.any(denom == 0):
        raise InvalidArgument("the datum (W0, W1) is zero")
    wts, y1, y2 = _boundary_series(ops, W0, W1, T, dt)
    num = wts @ y1 ** 2
    if not first_term_only:
        num = num + wts @ y2 ** 2
    q = num / denom
    return float(q) if W0.ndim == 1 else q


def observation_gram(ops: OperatorSet, T: float = DEFAULT_T, dt: Optional[float] = None,
                     spec: Optional[Spectrum] = None, first_term_only: bool = False):
    """Gram matrix G of the observation in eigen coordinates (alpha, beta).

    Returns (G, spec).  Runs one batched march with 2N columns.
    """
    if spec is None:
        spec = generalized_eigen(ops)
    N = ops.N
    Z = np.zeros((N, N))
    W0 = np.hstack([spec.psi / spec.freq, Z])
    W1 = np.hstack([Z, spec.psi])
    wts, y1, y2 = _boundary_series(ops, W0, W1, T, dt)
    G = (y1 * wts[:, None]).T @ y1
    if not first_term_only:
        G += (y2 * wts[:, None]).T @ y2
    return 0.5 * (G + G.T), spec


def _mode_indices(z: np.ndarray, N: int, count: int = 2) -> Tuple[int, ...]:
    weight = z[:N] ** 2 + z[N:] ** 2
    top = np.argsort(weight)[::-1][:count]
    return tuple(sorted(int(i) + 1 for i in top if weight[i] > 0))


def _block_min(G, modes, N):
    idx = [m - 1 for m in modes] + [N + m - 1 for m in modes]
    w, v = np.linalg.eigh(G[np.ix_(idx, idx)])
    z = np.zeros(2 * N)
    z[idx] = v[:, 0]
    return float(w[0]), z


def min_quotient(ops: OperatorSet, T: float = DEFAULT_T, dt: Optional[float] = None,
                 strategy: str = "eigenmodes", trials: int = 200, seed: int = 0,
                 first_term_only: bool = False, gram=None):
    """Smallest quotient found by ``strategy``; returns (kappa, witness).

    eigenmodes: every single mode (its 2 x 2 block), every adjacent pair and
    ``trials`` random pairs (4 x 4 blocks).  random: ``trials`` random unit
    data.  rayleigh: the global minimum, the smallest eigenvalue of G.

    ``gram`` may pass a precomputed (G, spectrum) pair.  The witness is a
    dict with the eigen coordinates ``z``, the data ``(W0, W1)`` and the
    dominant ``modes``.
    """
    if not T > 0:
        raise InvalidArgument(f"T must be positive, got {T}")
    if strategy not in STRATEGIES:
        raise InvalidArgument(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")
    if gram is None:
        gram = observation_gram(ops, T, dt, first_term_only=first_term_only)
    G, spec = gram
    N = ops.N
    rng = make_rng(seed, "min_quotient", strategy, N)

    if strategy == "eigenmodes":
        best, z, modes = math.inf, None, None
        for n in range(1, N + 1):
            q, zz = _block_min(G, (n,), N)
            if q < best:
                best, z, modes = q, zz, (n,)
        pairs = [(n, n + 1) for n in range(1, N)]
        if N > 1:
            for _ in range(trials):
                a, b = rng.choice(N, size=2, replace=False) + 1
                pairs.append((int(min(a, b)), int(max(a, b))))
        for pair in pairs:
            q, zz = _block_min(G, pair, N)
            if q < best:
                best, z, modes = q, zz, pair
    elif strategy == "random":
        Zr = rng.standard_normal((2 * N, trials))
        Zr /= np.linalg.norm(Zr, axis=0)
        q = np.einsum("im,ij,jm->m", Zr, G, Zr)
        k = int(np.argmin(q))
        best, z = float(q[k]), Zr[:, k]
        modes = _mode_indices(z, N)
    else:
        w, v = sla.eigh(G, subset_by_index=[0, 0])
        best, z = float(w[0]), v[:, 0]
        modes = _mode_indices(z, N)

    W0 = spec.psi @ (z[:N] / spec.freq)
    W1 = spec.psi @ z[N:]
    return best, {"z": z, "W0": W0, "W1": W1, "modes": tuple(modes)}


def top_mode_quotient(ops: OperatorSet, T: float = DEFAULT_T, dt: Optional[float] = None,
                      first_term_only: bool = True, spec: Optional[Spectrum] = None) -> float:
    """Quotient of the highest eigenmode started from rest."""
    if spec is None:
        spec = generalized_eigen(ops)
    psi = spec.psi[:, -1]
    return observability_quotient(ops, psi / spec.freq[-1], np.zeros(ops.N), T, dt,
                                  first_term_only=first_term_only)


# ---------------------------------------------------------------------------
# Nonharmonic Fourier sums
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InghamCheck:
    integral: float      # int_0^T |sum b_n e^{-i lambda_n t}|^2 dt
    coeff_energy: float  # sum |b_n|^2
    C: float             # coeff_energy / integral

    @property
    def lhs(self) -> float:
        return self.C * self.integral

    @property
    def rhs(self) -> float:
        return self.coeff_energy


def exponential_gram(freqs: np.ndarray, T: float) -> np.ndarray:
    """E[m, n] = int_0^T e^{-i (lambda_n - lambda_m) t} dt."""
    zeta = freqs[None, :] - freqs[:, None]
    # T e^{-i zeta T / 2} sinc(zeta T / 2), stable for small zeta
    return T * np.exp(-0.5j * zeta * T) * np.sinc(zeta * T / (2.0 * np.pi))


def ingham_sum_check(spec: Spectrum, T: float, b, dt: Optional[float] = None) -> InghamCheck:
    """Integral of the exponential sum over the signed family -N..-1, 1..N.

    Without ``dt`` the integral is exact; with ``dt`` it is the trapezoid rule.
    """
    if not T > 0:
        raise InvalidArgument(f"T must be positive, got {T}")
    lam = spec.signed_freq()
    b = np.asarray(b, dtype=complex)
    if b.shape != lam.shape:
        raise InvalidArgument(f"need {lam.size} coefficients (signed family), got {b.size}")
    if dt is None:
        integral = float(np.real(np.conj(b) @ exponential_gram(lam, T) @ b))
    else:
        tg = make_time_grid(T, dt)
        s = np.exp(-1j * np.outer(tg.times, lam)) @ b
        integral = float(tg.trapezoid_weights() @ np.abs(s) ** 2)
    energy = float(np.sum(np.abs(b) ** 2))
    return InghamCheck(integral=integral, coeff_energy=energy,
                       C=energy / integral if integral > 0 else math.inf)


# ---------------------------------------------------------------------------
# Sweeps and report
# ---------------------------------------------------------------------------

@dataclass
class ObservabilityRecord:
    N: int
    h: float
    T: float
    strategy: str
    quotient: float
    modes: Tuple[int, ...]
    top_first_term: float = float("nan")


@dataclass
class ObservabilityReport:
    T: float
    records: List[ObservabilityRecord] = field(default_factory=list)
    note: str = "uniformity in h is guaranteed only for T above the critical time"

    @property
    def kappa0(self) -> float:
        return min(r.quotient for r in self.records)

    @property
    def uniformity_ratio(self) -> float:
        q = [r.quotient for r in self.records]
        return max(q) / min(q)

    def to_csv(self, path, first_term: bool = False) -> None:
        header = ["N", "h", "T", "strategy", "quotient", "witness_mode_indices"]
        if first_term:
            header.append("top_mode_first_term_quotient")
        rows = []
        for r in self.records:
            row = [r.N, r.h, r.T, r.strategy, r.quotient, ";".join(str(m) for m in r.modes)]
            if first_term:
                row.append(r.top_first_term)
            rows.append(row)
        write_csv(path, header, rows)


def observability_sweep(potential, Ns: Sequence[int], T: float = DEFAULT_T,
                        strategy: str = "rayleigh", trials: int = 200, seed: int = 0,
                        first_term: bool = False) -> ObservabilityReport:
    if not Ns:
        raise InvalidArgument("the N list is empty")
    report = ObservabilityReport(T=T)
    for N in Ns:
        ops = assemble(build_grid(N), potential)
        gram = observation_gram(ops, T)
        q, wit = min_quotient(ops, T, strategy=strategy, trials=trials, seed=seed, gram=gram)
        rec = ObservabilityRecord(N=N, h=ops.h, T=T, strategy=strategy, quotient=q,
                                  modes=wit["modes"])
        if first_term:
            rec.top_first_term = top_mode_quotient(ops, T, spec=gram[1])
        report.records.append(rec)
    return report
