"""Integer approximations K_n of omega * sum_j a_j theta_j^n and the cover counts built on them.

The scale sequence is x_n = omega * sum_j a_j theta_j^n.  For a parameter
point coming from a roof s and a return word v, the identity
sum_j b_j theta_j^n = <S^n l(v), s> gives x_n = (omega / b_1) <S^n l(v), s>,
which is evaluated from exact integer vectors in extended precision.  The
eigen-expansion itself is kept as an independent cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np

from .errors import NumericFailure, OmegaOutOfRange, Overflow
from .perron import CharPoly, EigenSystem, ParamPoint, VandermondeData
from .substitution import population_vector

X_LIMIT = 1e15
LD = np.longdouble


# --------------------------------------------------------------------------
# traces

@dataclass
class EKTrace:
    omega: float
    a: np.ndarray
    x: np.ndarray = field(repr=False)        # longdouble, index 0 <-> n = 1
    K: np.ndarray = field(repr=False)        # int64
    eps: np.ndarray = field(repr=False)      # float64, in (-1/2, 1/2]
    residual: float = 0.0                    # recursion residual relative to max |x_n|
    imag_residual: float = 0.0
    n_min: int = 1

    @property
    def N(self) -> int:
        return int(self.K.size)

    @property
    def n(self) -> np.ndarray:
        return np.arange(1, self.N + 1)

    def windows(self, m: int, rho: float) -> np.ndarray:
        """Start indices n (1-based) with max(|eps_n|, ..., |eps_{n+m}|) < rho."""
        small = np.abs(self.eps) < rho
        if self.N <= m:
            return np.zeros(0, dtype=int)
        ok = np.ones(self.N - m, dtype=bool)
        for i in range(m + 1):
            ok &= small[i:self.N - m + i]
        return np.nonzero(ok)[0] + 1


def nearest_split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """x = K + eps with K integer and eps in (-1/2, 1/2]; a tie gives eps = +1/2."""
    x = np.asarray(x, dtype=LD)
    K = np.ceil(x - LD(0.5))
    return K.astype(np.int64), (x - K).astype(float)


def _companion_action(vd: VandermondeData, es: EigenSystem) -> np.ndarray:
    M = vd.Theta @ np.diag(es.eigenvalues) @ vd.Theta_inv
    return M.real


def recursion_residual(x: np.ndarray, M: np.ndarray) -> float:
    """max_n ||y_{n+1} - M y_n||_inf / max|x| with y_n = (x_n, ..., x_{n+m-1})."""
    m = M.shape[0]
    x = np.asarray(x, dtype=LD)
    if x.size <= m:
        return 0.0
    Y = np.stack([x[i:x.size - m + 1 + i] for i in range(m)])     # columns y_n
    diff = Y[:, 1:] - M.astype(LD) @ Y[:, :-1]
    scale = np.max(np.abs(x))
    if scale == 0:
        return float(np.max(np.abs(diff)))
    return float(np.max(np.abs(diff)) / scale)


def trace_from_scale(x, omega: float, a, M: np.ndarray, n_min: int = 1,
                     imag_residual: float = 0.0) -> EKTrace:
    x = np.asarray(x, dtype=LD)
    K, eps = nearest_split(x)
    return EKTrace(float(omega), np.asarray(a), x, K, eps, recursion_residual(x, M),
                   imag_residual, n_min)


def orbit_populations(es: EigenSystem, pop0: Sequence[int], N: int) -> np.ndarray:
    """Exact S^n l(v) for n = 1..N as an object array of shape (N, m)."""
    S = np.asarray(es.S).astype(object)
    p = np.asarray(pop0).astype(object)
    rows = []
    for _ in range(N):
        p = S.dot(p)
        rows.append(p)
    return np.array(rows, dtype=object)


def perron_vectors_mp(es: EigenSystem, dps: int = 40) -> tuple[list, list]:
    """Right and left Perron vectors of S at ``dps`` digits (each normalised to sum one)."""
    coeffs = [int(c) for c in es.char_poly.coefficients]
    with mpmath.workdps(dps):
        theta = mpmath.findroot(lambda z: mpmath.polyval(coeffs, z), mpmath.mpf(es.theta))
        S = mpmath.matrix([[int(v) for v in row] for row in np.asarray(es.S)])
        A = S - theta * mpmath.eye(es.m)
        return list(_mp_null(A)), list(_mp_null(A.T))


def _mp_to_ld(v) -> np.ndarray:
    return np.array([LD(mpmath.nstr(x, 30, min_fixed=-1, max_fixed=-1)) for x in v], dtype=LD)


def scale_sequences(omegas, roofs, p0: Sequence[int], es: EigenSystem, N: int) -> np.ndarray:
    """x_n for a batch of (omega, s) sharing the return word; shape (batch, N), longdouble.

    b_1 = <s, r> <l, l(v)> / <l, r> uses Perron vectors rounded from 40 digits,
    so the whole evaluation carries extended-precision accuracy.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    roofs = np.atleast_2d(np.asarray(roofs, dtype=float))
    P = orbit_populations(es, p0, N)
    # longdouble keeps integers up to 2^64 exact, far beyond the overflow limit
    Pld = np.array([[LD(int(v)) for v in row] for row in P], dtype=LD)
    r_mp, l_mp = perron_vectors_mp(es)
    with mpmath.workdps(40):
        lp = mpmath.fsum(l_mp[i] * int(p0[i]) for i in range(es.m))
        lr = mpmath.fsum(l_mp[i] * r_mp[i] for i in range(es.m))
        ratio = _mp_to_ld([lp / lr])[0]
    r = _mp_to_ld(r_mp)
    b1 = (roofs.astype(LD) @ r) * ratio
    lengths = roofs.astype(LD) @ Pld.T                                 # (batch, N)
    return (omegas.astype(LD) / b1)[:, None] * lengths


def _mp_null(A) -> "mpmath.matrix":
    """A null vector of the (rank m-1) mpmath matrix A, normalised to sum one."""
    m = A.rows
    best, best_det = None, mpmath.mpf(0)
    for i in range(m):
        Ai = A.copy()
        for j in range(m):
            Ai[i, j] = 1
        d = abs(mpmath.det(Ai))
        if d > best_det:
            best, best_det = i, d
    rhs = mpmath.matrix(m, 1)
    rhs[best] = 1
    Ai = A.copy()
    for j in range(m):
        Ai[best, j] = 1
    return mpmath.lu_solve(Ai, rhs)


def perron_scale_mp(es: EigenSystem, s, pop0: Sequence[int], dps: int) -> mpmath.mpf:
    """b_1 = <s, r> <l, l(v)> / <l, r> from Perron vectors computed at ``dps`` digits."""
    r, l = perron_vectors_mp(es, dps)
    m = es.m
    with mpmath.workdps(dps):
        sv = [mpmath.mpf(float(v)) for v in s]
        sr = mpmath.fsum(sv[i] * r[i] for i in range(m))
        lp = mpmath.fsum(l[i] * int(pop0[i]) for i in range(m))
        lr = mpmath.fsum(l[i] * r[i] for i in range(m))
        return +(sr * lp / lr)


def ek_trace(omega: float, p: ParamPoint, es: EigenSystem, N: int, vd: VandermondeData,
             B: float | None = None, n_min_factor: float = 4.0,
             dps: int | None = None) -> EKTrace:
    """(K_n, eps_n) for n = 1..N with the recursion and conjugate-pairing checks.

    ``dps=None`` works in 80-bit extended precision and raises Overflow once
    |x_N| > 1e15.  An integer ``dps`` switches to mpmath at that many digits,
    with the overflow threshold raised to 10^(dps - 15).
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    if N < es.m:
        raise ValueError("need N >= m")
    pop = population_vector(p.v.v, es.m)
    if dps is None:
        x = scale_sequences([omega], [p.s], pop, es, N)[0]
        limit = X_LIMIT
        xf = x.astype(float)
    else:
        P = orbit_populations(es, pop, N)
        with mpmath.workdps(dps):
            c = mpmath.mpf(float(omega)) / perron_scale_mp(es, p.s, pop, dps + 10)
            sv = [mpmath.mpf(float(v)) for v in p.s]
            x = np.array([c * mpmath.fsum(int(row[a]) * sv[a] for a in range(es.m)) for row in P],
                         dtype=object)
        limit = 10.0 ** (dps - 15)
        xf = np.array([float(v) for v in x])
    if np.max(np.abs(xf)) > limit:
        raise Overflow(f"|x_N| = {float(np.max(np.abs(xf))):.3e} exceeds {limit:.0e}; reduce N")
    # independent evaluation through the eigen-expansion (relative agreement)
    n = np.arange(1, N + 1)
    powers = es.eigenvalues.astype(np.clongdouble)[None, :] ** n[:, None]
    xc = LD(omega) * (powers @ p.a.astype(np.clongdouble))
    scale = np.maximum(np.abs(xf), 1.0)
    imag = float(np.max(np.abs(xc.imag.astype(float)) / scale))
    gap = float(np.max(np.abs(xc.real.astype(float) - xf) / scale))
    if imag > 1e-9 or gap > 1e-9:
        raise NumericFailure(f"eigen-expansion disagrees with the integer orbit (imag {imag:.2e}, gap {gap:.2e})")
    if B is None:
        B = max(2.0, omega, 1.0 / omega)
    n_min = max(1, math.ceil(n_min_factor * math.log(B)))
    M = _companion_action(vd, es)
    if dps is None:
        return trace_from_scale(x, omega, p.a, M, n_min, imag)
    with mpmath.workdps(dps):
        K = np.array([int(mpmath.ceil(v - mpmath.mpf(0.5))) for v in x], dtype=object)
        eps = np.array([float(v - k) for v, k in zip(x, K)])
    return EKTrace(float(omega), np.asarray(p.a), x, K, eps, recursion_residual(xf, M),
                   imag, n_min)


# --------------------------------------------------------------------------
# the companion-recurrence predictor

def predict_next_K(window: Sequence[int], cp: CharPoly) -> int:
    """K_{n+m} predicted from (K_n, ..., K_{n+m-1}) through x^m = sum_i c_i x^i."""
    c = cp.recurrence
    if len(window) != len(c):
        raise ValueError(f"window must hold {len(c)} values")
    return int(sum(int(ci) * int(k) for ci, k in zip(c, window)))


def admissible_continuations(window: Sequence[int], cp: CharPoly) -> list[int]:
    """Every K_{n+m} compatible with the window for some eps's in (-1/2, 1/2].

    K_{n+m} = P + sum_i c_i eps_{n+i} - eps_{n+m}, where P is the predictor value,
    so the slack ranges over an interval of half-width (1 + sum|c_i|)/2.
    """
    c = cp.recurrence
    P = predict_next_K(window, cp)
    pos = sum(ci for ci in c if ci > 0)
    neg = -sum(ci for ci in c if ci < 0)
    H = pos + neg + 1                     # the slack lies between -H/2 and H/2
    # the top is never attained (-eps_{n+m} < 1/2); the bottom only when no c_i > 0
    out = [d for d in range(-H, H + 1) if -H < 2 * d < H or (2 * d == -H and pos == 0)]
    return [P + d for d in out]


# --------------------------------------------------------------------------
# E_k^N(B) membership

@dataclass(frozen=True)
class EKStats:
    N: int
    k: int
    B: float
    rho: float
    bad_count: int
    n_min: int
    below_n_min: int

    @property
    def member(self) -> bool:
        return self.bad_count < self.N / self.k


def ekn_membership(p: ParamPoint, omega: float, rho: float, N: int, k: int, B: float,
                   es: EigenSystem, vd: VandermondeData, n_min_factor: float = 4.0,
                   dps: int | None = None) -> EKStats:
    """Counts n <= N with ||x_n|| >= rho for this (omega, a) witness."""
    if not 1.0 / B <= omega <= B:
        raise OmegaOutOfRange(f"omega={omega} outside [1/B, B] = [{1 / B}, {B}]")
    if k < 1:
        raise ValueError("k must be >= 1")
    tr = ek_trace(omega, p, es, N, vd, B=B, n_min_factor=n_min_factor, dps=dps)
    bad = int(np.sum(np.abs(tr.eps) >= rho))
    return EKStats(N, k, float(B), float(rho), bad, tr.n_min, int(min(N, tr.n_min - 1)))


# --------------------------------------------------------------------------
# covers and the dimension bound

@dataclass(frozen=True)
class CoverBudget:
    N: int
    k: int
    B: float
    m: int
    L: float
    theta_mq: float
    eta: float
    binom: int
    log_count: float
    log_radius: float
    prefactor: str = "O(1)"

    @property
    def ball_radius(self) -> float:
        return math.exp(self.log_radius)

    @property
    def ball_count_bound(self) -> float:
        """B^m binom(N, ceil(N/k)) L^((m+1) ceil(N/k)), without the O(1) prefactor."""
        return math.exp(self.log_count) if self.log_count < 700 else math.inf

    @property
    def log_series_term(self) -> float:
        return self.log_count + self.eta * self.log_radius

    @property
    def series_term(self) -> float:
        v = self.log_series_term
        return math.exp(v) if v < 700 else math.inf


def cover_budget(N: int, k: int, B: float, es: EigenSystem, vd: VandermondeData,
                 eta: float) -> CoverBudget:
    if B < 2:
        raise ValueError("need B >= 2")
    if not 1 <= k <= N:
        raise ValueError("need 1 <= k <= N")
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    m = es.m
    j = -(-N // k)
    binom = math.comb(N, j)
    log_count = m * math.log(B) + math.log(binom) + (m + 1) * j * math.log(vd.L)
    th = es.expanding_modulus
    log_radius = math.log(2 * B * vd.C_Theta) + (-N + m - 1) * math.log(th)
    return CoverBudget(N, k, float(B), m, vd.L, th, float(eta), binom, log_count, log_radius)


def series_threshold(k: int, B: float, es: EigenSystem, vd: VandermondeData, eta: float,
                     N_max: int) -> int | None:
    """Least N* in [k, N_max] after which the series term decreases along N*, N*+k, ...

    Steps of k absorb the jumps of ceil(N/k); None if no such N* exists.
    """
    terms = np.array([cover_budget(N, k, B, es, vd, eta).log_series_term
                      for N in range(k, N_max + 1)])
    best = None
    for r in range(k):
        seq = terms[r::k]
        if seq.size < 2:
            continue
        inc = np.nonzero(np.diff(seq) >= 0)[0]
        start = 0 if inc.size == 0 else inc[-1] + 1
        if start >= seq.size - 1:
            return None
        cand = k + r + start * k
        best = cand if best is None else max(best, cand)
    return best


@dataclass(frozen=True)
class DimensionBound:
    k: int
    Upsilon: float
    eta_count: float       # from the cover-count constraint
    eta_scale: float       # from the Upsilon constraint

    @property
    def eta_max(self) -> float:
        return max(self.eta_count, self.eta_scale)

    @property
    def feasible(self) -> bool:
        return self.eta_max < 1.0


def dimension_bound(k: int, Upsilon: float, es: EigenSystem, vd: VandermondeData) -> DimensionBound:
    """Smallest admissible Hausdorff exponent from the two cover conditions.

    Both conditions are strict, so eta_max is an infimum; the bound is
    infeasible when eta_max >= 1.  The binomial factor is controlled by
    binom(N, ceil(N/k)) <= exp[(1 + ln k) ceil(N/k)], which differs from
    exp[(1 + ln k) N / k] by a factor bounded in N.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if Upsilon <= 0:
        raise ValueError("Upsilon must be positive")
    lt = math.log(es.expanding_modulus)
    if lt <= 0:
        raise ValueError("no expanding eigenvalue besides theta_1")
    m = es.m
    eta1 = 2.0 * (1.0 + math.log(k) + (m + 1) * math.log(vd.L)) / (k * lt)
    eta2 = 2.0 * (m + 2) / (Upsilon * lt)
    return DimensionBound(int(k), float(Upsilon), eta1, eta2)
