"""Empirical spectral measures of suspension flows and certified local bounds.

Estimators here work on one long orbit prefix with several seeded starting
points.  The local spectral mass near omega is read off the Fejer kernel
implicit in |S_R(f, omega)|^2 / R (bandwidth about 1/R).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AssumptionViolation, NoDecay, NonPositiveValue, NumericFailure, PrefixTooShort
from .perron import EigenSystem, VandermondeData
from .substitution import Substitution
from .suspension import (CylFunction, Orbit, TwistedIntegrator, orbit_with_length,
                         start_points)

# sampling step of the fast correlation estimator
DEFAULT_SAMPLE_STEP = 0.05
# above this many (lag x knot) evaluations the exact method is not used by "auto"
EXACT_WORK_LIMIT = 2 * 10**7
GAUSS2 = 0.5 / math.sqrt(3.0)


class TooFewPoints(NumericFailure):
    pass


# --------------------------------------------------------------------------
# correlation functions

@dataclass
class CorrelationTable:
    """sigma_hat_f(-t) = <f o h_t, f> on the uniform grid t = 0, dt, ..., t_max."""
    t: np.ndarray
    values: np.ndarray
    T: float
    n_samples: int
    method: str = "sampled"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.t.shape != self.values.shape or self.t.size < 2:
            raise ValueError("t and values must be matching arrays of length >= 2")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    @property
    def zero(self) -> float:
        return float(self.values[0].real)

    def check(self, rtol: float = 1e-6) -> None:
        v0 = self.values[0]
        if abs(v0.imag) > 1e-9 * max(1.0, abs(v0)) or v0.real < -1e-12:
            raise NumericFailure(f"correlation at t=0 is not real non-negative: {v0}")
        excess = np.max(np.abs(self.values)) - v0.real * (1 + rtol)
        if excess > 1e-15:
            raise NumericFailure("correlation exceeds its value at t=0; increase T")

    def at(self, t) -> np.ndarray:
        """Linear interpolation, extended to t < 0 by sigma_hat(t) = conj(sigma_hat(-t))."""
        t = np.asarray(t, dtype=float)
        a = np.abs(t)
        if np.any(a > self.t_max * (1 + 1e-12)):
            raise ValueError("t outside the tabulated range")
        re = np.interp(a, self.t, self.values.real)
        im = np.interp(a, self.t, self.values.imag)
        return np.where(t < 0, re - 1j * im, re + 1j * im)


def _knots_between(orbit: Orbit, f: CylFunction, lo: float, hi: float) -> np.ndarray:
    """Flow times in [lo, hi] where f o h_u can fail to be affine."""
    j0 = max(int(np.searchsorted(orbit.starts, lo, side="right")) - 1, 0)
    j1 = min(int(np.searchsorted(orbit.starts, hi, side="right")), orbit.n_tiles)
    starts = orbit.starts[j0:j1]
    letters = orbit.word[j0:j1]
    pts = [starts]
    for a in range(f.m):
        inner = f.knots_t[a][1:-1]
        if inner.size:
            sa = starts[letters == a]
            pts.append((sa[:, None] + inner[None, :]).ravel())
    pts = np.concatenate(pts)
    return pts[(pts > lo) & (pts < hi)]


def _exact_correlation(orbit: Orbit, f: CylFunction, t0: float, T: float,
                       lags: np.ndarray) -> np.ndarray:
    """(1/T) int_0^T f(h_{t0+u+t}) conj f(h_{t0+u}) du for each lag, exactly.

    Between merged knots the integrand is a product of two affine functions,
    so two-point Gauss-Legendre on every piece is exact.
    """
    base = _knots_between(orbit, f, t0, t0 + T)
    out = np.empty(lags.size, dtype=complex)
    for i, t in enumerate(lags):
        shifted = _knots_between(orbit, f, t0 + t, t0 + t + T) - t
        p = np.unique(np.concatenate([[t0], base, shifted, [t0 + T]]))
        mid, half = (p[1:] + p[:-1]) / 2, (p[1:] - p[:-1]) / 2
        u = np.concatenate([mid - 2 * GAUSS2 * half, mid + 2 * GAUSS2 * half])
        w = np.concatenate([half, half])
        g = orbit.sample(f, u + t) * np.conj(orbit.sample(f, u))
        out[i] = np.sum(w * g) / T
    return out


def _sampled_correlation(orbit: Orbit, f: CylFunction, t0: float, T: float,
                         h: float, n_lags: int, stride: int) -> np.ndarray:
    """Midpoint-rule estimate on the step-h grid, all lags at once by FFT."""
    n = int(round(T / h))
    L = (n_lags - 1) * stride
    u = t0 + (np.arange(n + L) + 0.5) * h
    A = orbit.sample(f, u)
    nfft = 1 << int(math.ceil(math.log2(n + L + 1)))
    X = np.fft.fft(A, nfft)
    Y = np.fft.fft(A[:n], nfft)
    c = np.fft.ifft(X * np.conj(Y))[: L + 1 : stride]
    return c / n


def orbit_correlation(f: CylFunction, sub: Substitution, s, t_max: float, dt: float,
                      T: float, seed: int = 0, n_samples: int = 4, method: str = "auto",
                      orbit: Orbit | None = None, freq: np.ndarray | None = None,
                      sample_step: float = DEFAULT_SAMPLE_STEP) -> CorrelationTable:
    """Time-averaged autocorrelation of f along the flow, averaged over seeded starts.

    ``method`` is "exact" (piecewise closed form), "sampled" (midpoint rule
    with FFT) or "auto", which picks exact when the work is small.
    """
    if T < 10 * t_max:
        raise ValueError("need T >= 10 * t_max")
    if dt <= 0 or t_max <= 0:
        raise ValueError("dt and t_max must be positive")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    n_lags = int(round(t_max / dt)) + 1
    lags = dt * np.arange(n_lags)
    window = T + t_max
    if orbit is None:
        orbit = orbit_with_length(sub, s, 4 * window, freq=freq)
    span = orbit.length - window
    if span <= 0:
        raise PrefixTooShort(f"orbit of flow length {orbit.length} cannot hold a window of {window}")
    t0s = start_points(n_samples, span, seed)

    if method == "auto":
        tiles = T / max(float(np.mean(orbit.s)), 1e-9)
        method = "exact" if n_lags * tiles <= EXACT_WORK_LIMIT else "sampled"
    acc = np.zeros(n_lags, dtype=complex)
    if method == "exact":
        for t0 in t0s:
            acc += _exact_correlation(orbit, f, t0, T, lags)
    elif method == "sampled":
        stride = max(1, int(math.ceil(dt / sample_step - 1e-9)))
        h = dt / stride
        for t0 in t0s:
            acc += _sampled_correlation(orbit, f, t0, T, h, n_lags, stride)
    else:
        raise ValueError(f"unknown method {method!r}")
    acc /= n_samples
    acc[0] = acc[0].real
    table = CorrelationTable(lags, acc, float(T), int(n_samples), method)
    table.check()
    return table


# --------------------------------------------------------------------------
# Fejer-kernel mass and twisted-sum suprema

def _twisted_samples(f, orbit, omega_grid, R_list, n_samples, seed):
    R = np.asarray(R_list, dtype=float)
    if R.ndim != 1 or R.size == 0 or np.any(np.diff(R) <= 0) or R[0] <= 0:
        raise ValueError("R_list must be positive and strictly increasing")
    span = orbit.length - R[-1]
    if span <= 0:
        raise PrefixTooShort(f"largest R={R[-1]} exceeds orbit flow length {orbit.length}")
    t0 = start_points(n_samples, span, seed)
    for om in np.atleast_1d(np.asarray(omega_grid, dtype=float)):
        ti = TwistedIntegrator(orbit, f, om)
        yield np.array([np.abs(ti(t0, r)) for r in R])    # (len(R), n_samples)


def fejer_mass(f: CylFunction, orbit: Orbit, omega_grid, R_list, n_samples: int = 4,
               seed: int = 0) -> np.ndarray:
    """G_R(omega) = mean over starts of |S_R(f, omega)|^2 / R; shape (len(omega), len(R))."""
    R = np.asarray(R_list, dtype=float)
    rows = [np.mean(a ** 2, axis=1) / R for a in
            _twisted_samples(f, orbit, omega_grid, R, n_samples, seed)]
    return np.array(rows)


def twisted_sup(f: CylFunction, orbit: Orbit, omega_grid, R_list, n_samples: int = 256,
                seed: int = 0) -> np.ndarray:
    """max over seeded starts of |S_R(f, omega)|; shape (len(omega), len(R))."""
    return np.array([np.max(a, axis=1) for a in
                     _twisted_samples(f, orbit, omega_grid, R_list, n_samples, seed)])


# --------------------------------------------------------------------------
# power-law fits

@dataclass
class DecayFit:
    slope: float
    intercept: float
    residual: float         # RMS in natural-log coordinates
    R_min: float
    R_max: float
    R: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return int(self.R.size)

    def predict(self, R) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(R, dtype=float) ** self.slope


def decay_fit(R: Sequence[float], values: Sequence[float],
              fit_range: tuple[float, float] | None = None) -> DecayFit:
    """Least squares of log(value) against log(R)."""
    R = np.asarray(R, dtype=float)
    v = np.asarray(values, dtype=float)
    if R.shape != v.shape:
        raise ValueError("R and values must have the same shape")
    if fit_range is not None:
        lo, hi = fit_range
        keep = (R >= lo * (1 - 1e-12)) & (R <= hi * (1 + 1e-12))
        R, v = R[keep], v[keep]
    if R.size < 8:
        raise TooFewPoints(f"a fit needs at least 8 points, got {R.size}")
    if np.any(v <= 0) or np.any(R <= 0):
        raise NonPositiveValue("log-log fit needs positive R and values")
    x, y = np.log(R), np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return DecayFit(float(slope), float(intercept), res, float(R[0]), float(R[-1]), R, v)


def running_max(values) -> np.ndarray:
    return np.maximum.accumulate(np.asarray(values, dtype=float))


def select_onset(R, sup, max_residual: float = 0.1, skip_decades: float = 1.0,
                 min_decades: float = 1.0) -> float:
    """Smallest grid scale R_0 from which one power law describes the running max of sup.

    Scales within ``skip_decades`` of the smallest R are never used (transient).
    The window [R_0, R_max] must span ``min_decades`` and hold 8 points.  When
    no window reaches ``max_residual`` the best one is returned.
    """
    R = np.asarray(R, dtype=float)
    env = running_max(sup)
    best, best_res = None, np.inf
    for i in range(R.size):
        if R[i] < R[0] * 10 ** skip_decades * (1 - 1e-12):
            continue
        if R[-1] / R[i] < 10 ** min_decades * (1 - 1e-12) or R.size - i < 8:
            break
        fit = decay_fit(R[i:], env[i:])
        if fit.residual <= max_residual:
            return float(R[i])
        if fit.residual < best_res:
            best, best_res = float(R[i]), fit.residual
    if best is None:
        raise TooFewPoints("R grid too short for any admissible fit window")
    return best


# --------------------------------------------------------------------------
# Holder certificate

@dataclass
class HolderCertificate:
    """sigma_f([omega - r, omega + r]) <= (pi^2 C1 / 4) (2r)^gamma for r <= r_max."""
    omega: float
    gamma: float
    C1: float
    R0: float
    fit: DecayFit = field(repr=False)

    def __post_init__(self):
        if not 0 < self.gamma <= 2:
            raise ValueError("gamma must lie in (0, 2]")
        if self.C1 <= 0:
            raise ValueError("C1 must be positive")

    @property
    def r_max(self) -> float:
        return 1.0 / (2.0 * self.R0)

    def bound(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0) or np.any(r > self.r_max * (1 + 1e-12)):
            raise ValueError(f"certificate valid only for 0 < r <= {self.r_max}")
        return math.pi ** 2 * self.C1 / 4 * (2 * r) ** self.gamma

    def sup_bound(self, R) -> np.ndarray:
        """The twisted-sum bound R * sqrt(C1 R^-gamma) behind the certificate."""
        R = np.asarray(R, dtype=float)
        return R * np.sqrt(self.C1 * R ** (-self.gamma))

    def as_dict(self) -> dict:
        return {"omega": self.omega, "gamma": self.gamma, "C1": self.C1, "R0": self.R0,
                "r_max": self.r_max, "fit_slope": self.fit.slope,
                "fit_residual": self.fit.residual, "fit_points": self.fit.n_points}


def varr_certificate(R, supS, R0: float, omega: float, envelope: bool = True) -> HolderCertificate:
    """Fit sup|S_R| <= R sqrt(C1 R^-gamma) on R >= R0.

    gamma comes from the log-log slope p of the data (gamma = 2 - 2p), fitted
    to the running maximum when ``envelope`` is set (the bound is increasing
    in R, so this loses nothing).  C1 is then the least constant for which the
    bound dominates every data point with R >= R0.
    """
    R = np.asarray(R, dtype=float)
    sup = np.asarray(supS, dtype=float)
    if R.shape != sup.shape:
        raise ValueError("R and supS must have the same shape")
    if R0 > R[-1]:
        raise ValueError("no data at or above R0")
    data = running_max(sup) if envelope else sup
    keep = R >= R0 * (1 - 1e-12)
    fit = decay_fit(R[keep], data[keep])
    gamma = 2.0 - 2.0 * fit.slope
    if gamma <= 1e-9:
        raise NoDecay(f"fitted slope {fit.slope:.4f} leaves no decay exponent")
    gamma = min(gamma, 2.0)
    C1 = float(np.max(sup[keep] ** 2 * R[keep] ** (gamma - 2.0)))
    if C1 <= 0:
        raise NonPositiveValue("all twisted sums vanish; no constant to fit")
    cert = HolderCertificate(float(omega), float(gamma), C1, float(R0), fit)
    assert np.all(sup[keep] <= cert.sup_bound(R[keep]) * (1 + 1e-12))
    return cert


# --------------------------------------------------------------------------
# Strichartz-type check

def strichartz_sup(corr: CorrelationTable, gamma: float, y_grid, R_grid) -> float:
    """sup over the grids of R^(gamma-1) int_{y-R}^{y+R} |sigma_hat|^2 (trapezoid rule)."""
    y = np.atleast_1d(np.asarray(y_grid, dtype=float))
    R = np.atleast_1d(np.asarray(R_grid, dtype=float))
    R = R[R >= 1]
    if R.size == 0:
        return 0.0
    if np.max(np.abs(y)) + np.max(R) > corr.t_max * (1 + 1e-12):
        raise ValueError("correlation table does not cover |y| + R")
    sq = np.abs(corr.values) ** 2
    Q = np.concatenate([[0.0], np.cumsum((sq[1:] + sq[:-1]) / 2 * np.diff(corr.t))])

    def prim(x):
        # |sigma_hat|^2 is even, so its primitive from 0 is odd
        return np.sign(x) * np.interp(np.abs(x), corr.t, Q)

    Y, RR = np.meshgrid(y, R, indexing="ij")
    vals = RR ** (gamma - 1) * (prim(Y + RR) - prim(Y - RR))
    return float(np.max(vals))


# --------------------------------------------------------------------------
# theoretical exponents

@dataclass(frozen=True)
class ExponentBudget:
    rho: float
    L: float
    k: int
    Upsilon: float
    c1: float
    alpha_twist: float
    Z: float
    gamma_tilde: float
    beta: float
    beta_tilde: float
    gamma_final: float

    @property
    def product_exponent(self) -> float:
        """Decay exponent of the product correlation, gamma_final / 2."""
        return self.gamma_final / 2

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["product_exponent"] = self.product_exponent
        return d


def exponent_budget(es: EigenSystem, vd: VandermondeData, k: int, Upsilon: float,
                    c1: float = 0.5, beta_tilde: float | None = None) -> ExponentBudget:
    """Exponents obtained from (k, Upsilon, c1, beta_tilde); beta_tilde defaults to (beta+1)/2."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if Upsilon <= 0:
        raise ValueError("Upsilon must be positive")
    if not 0 < c1 < 1:
        raise ValueError("c1 must lie in (0, 1)")
    theta2 = abs(es.eigenvalues[1])
    if theta2 <= 1:
        raise AssumptionViolation(f"|theta_2| = {theta2:.6f} is not > 1")
    beta = es.beta
    if beta_tilde is None:
        beta_tilde = (beta + 1) / 2
    if not beta < beta_tilde < 1:
        raise AssumptionViolation(f"beta_tilde = {beta_tilde} must lie in ({beta:.6f}, 1)")
    log_theta = math.log(es.theta)
    alpha = 1.0 + math.log(1.0 - c1 * vd.rho ** 2) / log_theta / k
    Z = Upsilon * log_theta
    gamma_tilde = 2.0 - 2.0 * max(alpha, 1.0 - 1.0 / Z)
    gamma_final = min(gamma_tilde, (2.0 - 2.0 * beta_tilde) / Z)
    return ExponentBudget(vd.rho, vd.L, int(k), float(Upsilon), float(c1), alpha, Z,
                          gamma_tilde, beta, float(beta_tilde), gamma_final)
