"""Birkhoff sums of cylinder step functions and their discrepancy growth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AssumptionViolation, MeanNotZero, PrefixTooShort
from .perron import EigenSystem, eigen_system
from .spectral import DecayFit, decay_fit
from .substitution import Substitution, prefix_orbit, substitution_matrix, validate_assumptions


@dataclass(frozen=True)
class StepFunction:
    """F = sum_a d_a 1_[a]."""
    d: np.ndarray
    freq: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "d", np.asarray(self.d, dtype=complex))
        if self.freq is not None:
            object.__setattr__(self, "freq", np.asarray(self.freq, dtype=float))
            if self.freq.shape != self.d.shape:
                raise ValueError("freq and d must have the same length")

    @classmethod
    def centered(cls, d: Sequence[complex], freq: np.ndarray) -> "StepFunction":
        """Subtract the mean so that sum_a freq_a d_a = 0."""
        d = np.asarray(d, dtype=complex)
        freq = np.asarray(freq, dtype=float)
        return cls(d - np.dot(freq, d) / freq.sum(), freq)

    @property
    def mean(self) -> complex:
        if self.freq is None:
            raise ValueError("letter frequencies unknown")
        return complex(np.dot(self.freq, self.d))

    @property
    def mean_zero(self) -> bool:
        return abs(self.mean) <= 1e-10


def birkhoff_sum(F: StepFunction, x: np.ndarray, N: int) -> complex:
    """sum_{n<N} d_{x_n}, from exact letter counts."""
    x = np.asarray(x)
    if N > x.size:
        raise PrefixTooShort(f"N={N} exceeds the prefix length {x.size}")
    if N <= 0:
        return 0j
    counts = np.bincount(x[:N], minlength=F.d.size)
    return complex(math.fsum((counts * F.d.real)) + 1j * math.fsum(counts * F.d.imag))


def birkhoff_path(F: StepFunction, x: np.ndarray) -> np.ndarray:
    """S_n for n = 1..|x| as exact count combinations (no rounding drift)."""
    x = np.asarray(x)
    out = np.zeros(x.size, dtype=complex)
    for a, da in enumerate(F.d):
        if da != 0:
            out += np.cumsum(x == a, dtype=np.int64) * da
    return out


@dataclass
class DiscrepancySeries:
    checkpoints: np.ndarray
    values: np.ndarray
    fit: DecayFit
    log_correction: float = 0.0         # nu in the fit of log D - nu log log N
    plain_fit: DecayFit | None = field(default=None, repr=False)

    @property
    def slope(self) -> float:
        return self.fit.slope

    def running_slope(self) -> np.ndarray:
        """Local log-log slope between consecutive checkpoints (nan for the first)."""
        x, y = np.log(self.checkpoints), np.log(np.maximum(self.values, 1e-300))
        out = np.full(x.size, np.nan)
        out[1:] = np.diff(y) / np.diff(x)
        return out


def geometric_checkpoints(N_min: float, N_max: int, ratio: float) -> np.ndarray:
    if ratio <= 1:
        raise ValueError("ratio must exceed 1")
    n = int(math.floor(math.log(N_max / N_min) / math.log(ratio) + 1e-9))
    pts = np.unique(np.round(N_min * ratio ** np.arange(n + 1)).astype(np.int64))
    return pts[pts <= N_max]


def discrepancy_fit(F: StepFunction, sub: Substitution, N_max: int, N_min: int = 1000,
                    log_correction: bool = False, letters: Sequence[int] | None = None,
                    es: EigenSystem | None = None) -> DiscrepancySeries:
    """D(N) = max_{n <= N} |S_n(F)| along checkpoints of ratio theta, and its log-log slope.

    The sup runs over every prefix length and over the starting letters
    (default: all of them).
    """
    report = validate_assumptions(sub)
    if not report.all_hold:
        raise AssumptionViolation("; ".join(report.failures()))
    if es is None:
        es = eigen_system(substitution_matrix(sub))
    if F.freq is None:
        F = StepFunction(F.d, es.frequencies())
    if not F.mean_zero:
        raise MeanNotZero(f"mean of F is {F.mean}")
    if letters is None:
        letters = range(sub.m)
    path = np.zeros(N_max)
    for a in letters:
        w = prefix_orbit(sub, a, N_max)
        path = np.maximum(path, np.abs(birkhoff_path(F, w)))
    D = np.maximum.accumulate(path)
    cps = geometric_checkpoints(N_min, N_max, es.theta)
    vals = D[cps - 1]
    plain = decay_fit(cps, vals)
    nu = es.nu_plus_1 - 1
    if log_correction and nu > 0:
        fit = decay_fit(cps, vals / np.log(np.log(cps)) ** nu)
    else:
        fit = plain
    return DiscrepancySeries(cps, vals, fit, float(nu if log_correction else 0), plain)


def zero_mass_bound(r, es: EigenSystem, C: float) -> np.ndarray:
    """C (log 1/r)^(2 nu) r^(2 - 2 beta): the shape of the spectral mass near zero."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r >= math.exp(-1)):
        raise ValueError("r must lie in (0, 1/e)")
    if C <= 0:
        raise ValueError("C must be positive")
    nu = es.nu_plus_1 - 1
    return C * np.log(1.0 / r) ** (2 * nu) * r ** (2 - 2 * es.beta)
