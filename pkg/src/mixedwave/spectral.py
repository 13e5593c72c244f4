"""
Generalized eigenproblem (K + L) psi = mu M psi and the spectral quantities
built on it: frequencies, the gap between consecutive frequencies, the
boundary size of each eigenvector, and the two scalar inequalities used in
the gap argument.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import scipy.linalg as sla

from .csvio import write_csv
from .errors import InvalidArgument, NumericalFailure
from .grid import OperatorSet

MAX_DENSE_N = 2000

# C_0 in the direct inequality, frozen from an a = 0 sweep (max lhs there is < 8)
DIRECT_INEQUALITY_C0 = 8.0


@dataclass(frozen=True)
class EigenPair:
    n: int
    mu: float
    psi: np.ndarray

    @property
    def freq(self) -> float:
        return float(np.sqrt(self.mu))

    @property
    def phi1(self) -> float:
        return float(self.psi[0])


@dataclass(frozen=True)
class Spectrum:
    ops: OperatorSet
    mu: np.ndarray      # ascending
    psi: np.ndarray     # columns, M-orthonormal

    @property
    def N(self) -> int:
        return self.mu.size

    @property
    def freq(self) -> np.ndarray:
        return np.sqrt(self.mu)

    @property
    def pairs(self) -> List[EigenPair]:
        return [self.pair(n) for n in range(1, self.N + 1)]

    def pair(self, n: int) -> EigenPair:
        return EigenPair(n=n, mu=float(self.mu[n - 1]), psi=self.psi[:, n - 1])

    def signed_freq(self) -> np.ndarray:
        """lambda^n for 1 <= |n| <= N, ordered -N..-1, 1..N."""
        lam = self.freq
        return np.concatenate([-lam[::-1], lam])

    def mode_observability(self, first_term_only: bool = False) -> np.ndarray:
        h = self.ops.h
        phi1 = self.psi[0]
        first = (phi1 / (h * self.freq)) ** 2
        return first if first_term_only else first + (phi1 / 2.0) ** 2

    def coefficients(self, W: np.ndarray) -> np.ndarray:
        """M-inner products <M W, psi^n>."""
        return self.psi.T @ (self.ops.M @ W)

    def evolve(self, W0: np.ndarray, W1: np.ndarray, times: np.ndarray,
               dt: float = None) -> np.ndarray:
        """Solution of the homogeneous system by modal expansion, shape (len(times), N).

        With ``dt`` given, each mode runs at the average-acceleration Newmark
        frequency (2/dt) arctan(lambda dt / 2) instead of lambda.
        """
        lam = self.freq
        if dt is not None:
            lam = 2.0 / dt * np.arctan(0.5 * lam * dt)
        a = self.coefficients(W0)
        b = self.coefficients(W1)
        if dt is None:
            b = b / lam
        else:
            b = b / self.freq
        t = np.asarray(times)[:, None]
        return (a * np.cos(lam * t) + b * np.sin(lam * t)) @ self.psi.T

    def to_csv(self, path, with_gap: bool = False) -> None:
        n = np.arange(1, self.N + 1)
        cols = [n, self.mu, self.freq, self.psi[0], self.mode_observability()]
        header = ["n", "mu", "lambda", "phi1", "mode_observability"]
        if with_gap:
            gap = np.append(np.diff(self.freq), np.nan)
            cols.append(gap)
            header.append("gap")
        rows = [[int(r[0])] + list(r[1:]) for r in zip(*cols)]
        write_csv(path, header, rows)


def _dense(T) -> np.ndarray:
    return T.to_dense()


def generalized_eigen(ops: OperatorSet, refine: bool = True) -> Spectrum:
    """Eigenpairs of the pencil (K + L, M).

    Cholesky M = B B^T, symmetric eigensolve of B^{-1} (K + L) B^{-T}, back
    substitution.  Each pair is then polished by one shifted inverse-iteration
    step on the tridiagonal pencil and its eigenvalue replaced by the Rayleigh
    quotient evaluated through difference forms, which restores full relative
    accuracy at the bottom of the spectrum.
    """
    N = ops.N
    if N > MAX_DENSE_N:
        raise InvalidArgument(f"N={N} exceeds the dense eigensolver cap {MAX_DENSE_N}")
    try:
        B = sla.cholesky(_dense(ops.M), lower=True)
    except sla.LinAlgError as exc:
        raise NumericalFailure(f"Cholesky factorization of M failed: {exc}") from exc
    X = sla.solve_triangular(B, _dense(ops.S), lower=True)
    C = sla.solve_triangular(B, X.T, lower=True).T
    C = 0.5 * (C + C.T)
    w, Q = sla.eigh(C)
    Psi = sla.solve_triangular(B.T, Q, lower=False)

    if refine:
        Psi = _inverse_iteration(ops, Psi, w)
    Psi = Psi / np.sqrt(ops.m_form(Psi))
    mu = ops.s_form(Psi) / ops.m_form(Psi)
    # sign convention: first component positive
    sgn = np.where(Psi[0] < 0, -1.0, 1.0)
    Psi = Psi * sgn
    order = np.argsort(mu)
    return Spectrum(ops=ops, mu=mu[order], psi=Psi[:, order])


def _inverse_iteration(ops, Psi, w):
    N = ops.N
    mu = ops.s_form(Psi) / ops.m_form(Psi)
    MPsi = ops.M @ Psi
    out = np.empty_like(Psi)
    S, M = ops.S, ops.M
    ab = np.zeros((3, N))
    for k in range(N):
        shift = mu[k] * (1.0 + 1e-12)
        ab[0, 1:] = S.off - shift * M.off
        ab[1] = S.diag - shift * M.diag
        ab[2, :-1] = S.off - shift * M.off
        try:
            x = sla.solve_banded((1, 1), ab, MPsi[:, k])
        except sla.LinAlgError:
            x = Psi[:, k]
        if not np.all(np.isfinite(x)):
            x = Psi[:, k]
        out[:, k] = x / np.linalg.norm(x)
    return out


def closed_form_mu(N: int) -> np.ndarray:
    """Eigenvalues for a = 0: (4/h^2) tan^2(n pi h / 2)."""
    h = 1.0 / (N + 1)
    n = np.arange(1, N + 1)
    return 4.0 / h ** 2 * np.tan(n * np.pi * h / 2.0) ** 2


def spectral_gap(spec: Spectrum) -> float:
    """min_n (lambda^{n+1} - lambda^n) over the positive branch."""
    if spec.N < 2:
        raise InvalidArgument("the gap needs at least two eigenvalues")
    return float(np.min(np.diff(spec.freq)))


def signed_family_gap(spec: Spectrum) -> float:
    return min(spectral_gap(spec), 2.0 * float(spec.freq[0]))


def mode_observability(pair: EigenPair, h: float, first_term_only: bool = False) -> float:
    first = (pair.phi1 / (h * np.sqrt(pair.mu))) ** 2
    return float(first if first_term_only else first + (pair.phi1 / 2.0) ** 2)


def potential_sup(ops: OperatorSet) -> float:
    return float(max(ops.potential.a_max, np.max(ops.a_nodes, initial=0.0)))


def direct_inequality_check(pair: EigenPair, ops: OperatorSet, C0: float = DIRECT_INEQUALITY_C0):
    """(mu + 1/h^2) |phi_1 / sqrt(mu)|^2  <=  C0 (1 + ||a||_inf^2 / mu)."""
    h = ops.h
    lhs = (pair.mu + 1.0 / h ** 2) * pair.phi1 ** 2 / pair.mu
    rhs = C0 * (1.0 + potential_sup(ops) ** 2 / pair.mu)
    return float(lhs), float(rhs), bool(lhs <= rhs)


def trapezoid_lemma_check(nu1: float, nu2: float, b1: complex, b2: complex,
                          t: float, r: float):
    """Compare the two-point trapezoid average of f(s) = |b1 e^{i nu1 s} + b2 e^{i nu2 s}|^2
    on [t, t + r] with its exact mean value.

    Requires r > 0, t >= 0 and |nu2 - nu1| <= pi / (2t + r).
    Returns (lhs, rhs, ok) with ok = lhs <= rhs + 1e-12.
    """
    if not r > 0 or not t >= 0:
        raise InvalidArgument(f"need r > 0 and t >= 0, got r={r}, t={t}")
    if abs(nu2 - nu1) > np.pi / (2.0 * t + r):
        raise InvalidArgument("|nu2 - nu1| exceeds pi / (2t + r)")
    b1, b2 = complex(b1), complex(b2)

    def f(s):
        return abs(b1 * np.exp(1j * nu1 * s) + b2 * np.exp(1j * nu2 * s)) ** 2

    lhs = 0.5 * (f(t) + f(t + r))
    z = b1 * np.conj(b2)
    zeta = nu1 - nu2
    # (1/r) int_t^{t+r} e^{i zeta s} ds = e^{i zeta (t + r/2)} sinc(zeta r / 2)
    mean_osc = np.exp(1j * zeta * (t + 0.5 * r)) * np.sinc(zeta * r / (2.0 * np.pi))
    rhs = abs(b1) ** 2 + abs(b2) ** 2 + 2.0 * (z * mean_osc).real
    return float(lhs), float(rhs), bool(lhs <= rhs + 1e-12)


def gap_sweep(potential, Ns: Sequence[int]):
    """Min gap per N for a fixed potential; returns list of (N, gap)."""
    from .grid import assemble, build_grid
    out = []
    for N in Ns:
        spec = generalized_eigen(assemble(build_grid(N), potential))
        out.append((N, spectral_gap(spec)))
    return out
