"""Correlation decay for the product of the suspension flow with an explicit ergodic partner."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooCoarse
from .spectral import CorrelationTable, DecayFit, ExponentBudget, decay_fit

GOLDEN_CONJUGATE = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PartnerFlow:
    """Partner flow with g(y) = exp(2 pi i (y_1 + ...)) and closed-form autocorrelation.

    ``circle_rotation`` has one frequency; ``torus_linear`` has two.
    """
    kind: str = "circle_rotation"
    alphas: tuple[float, ...] = (GOLDEN_CONJUGATE,)

    def __post_init__(self):
        need = {"circle_rotation": 1, "torus_linear": 2}
        if self.kind not in need:
            raise ValueError(f"unknown partner kind {self.kind!r}")
        if len(self.alphas) != need[self.kind]:
            raise ValueError(f"{self.kind} takes {need[self.kind]} frequencies")

    @property
    def frequency(self) -> float:
        return float(sum(self.alphas))

    @property
    def g_norm_sq(self) -> float:
        return 1.0


def partner_spectrum(p: PartnerFlow, t) -> np.ndarray:
    """sigma_hat_g(-t) = exp(2 pi i (alpha_1 + ...) t)."""
    t = np.asarray(t, dtype=float)
    return np.exp(2j * math.pi * np.mod(p.frequency * t, 1.0))


@dataclass
class ProductCorrelation:
    R: np.ndarray
    I: np.ndarray
    abs_integral: np.ndarray = field(repr=False)     # int_0^R |sigma_f| |sigma_g|
    cs_f: np.ndarray = field(repr=False)             # int_0^R |sigma_f|^2
    cs_g: np.ndarray = field(repr=False)             # int_0^R |sigma_g|^2
    fit: DecayFit | None = None
    predicted_slope: float | None = None

    @property
    def cs_bound(self) -> np.ndarray:
        return np.sqrt(self.cs_f * self.cs_g)

    def cs_holds(self, rtol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.I) <= self.cs_bound * (1 + rtol) + 1e-300))

    @property
    def alpha_emp(self) -> float | None:
        """Empirical decay exponent: |I(R)| ~ R^(1 - alpha_emp)."""
        return None if self.fit is None else 1.0 - self.fit.slope

    @property
    def consistent(self) -> bool | None:
        """alpha_emp >= gamma_final / 2, the only direction the theory speaks to."""
        if self.fit is None or self.predicted_slope is None:
            return None
        return self.fit.slope <= self.predicted_slope + 1e-12

    def running_slope(self) -> np.ndarray:
        x, y = np.log(self.R), np.log(np.maximum(np.abs(self.I), 1e-300))
        out = np.full(x.size, np.nan)
        out[1:] = np.diff(y) / np.diff(x)
        return out


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.concatenate([[0], np.cumsum((y[1:] + y[:-1]) / 2 * np.diff(t))])


def product_correlation_decay(corr: CorrelationTable, p: PartnerFlow, R_grid,
                              fit_range: tuple[float, float] | None = None,
                              budget: ExponentBudget | None = None) -> ProductCorrelation:
    """I(R) = int_0^R sigma_hat_f(-t) sigma_hat_g(-t) dt by the trapezoid rule.

    The same quadrature weights are used for I(R) and both Cauchy-Schwarz
    factors, so |I(R)| <= (int|sigma_f|^2)^(1/2) (int|sigma_g|^2)^(1/2) holds
    exactly on the discrete data.
    """
    dt = corr.dt
    limit = 1.0 / (10.0 * (1.0 + abs(p.frequency)))
    if dt > limit * (1 + 1e-12):
        raise GridTooCoarse(f"dt={dt} exceeds 1/(10 (1+|alpha|)) = {limit:.4g}")
    R = np.asarray(R_grid, dtype=float)
    if np.any(R < 0) or np.max(R) > corr.t_max * (1 + 1e-12):
        raise ValueError("R grid must lie inside the correlation table")
    t, a = corr.t, corr.values
    b = partner_spectrum(p, t)
    prod = a * b
    C_ab = _cumtrapz(prod, t)
    C_abs = _cumtrapz(np.abs(a) * np.abs(b), t)
    C_aa = _cumtrapz(np.abs(a) ** 2, t)
    C_bb = _cumtrapz(np.abs(b) ** 2, t)

    j = np.clip(np.searchsorted(t, R, side="right") - 1, 0, t.size - 1)
    dR = R - t[j]
    aR = corr.at(np.minimum(R, corr.t_max))
    bR = partner_spectrum(p, R)

    def extend(C, y_grid, y_end):
        return C[j] + dR * (y_grid[j] + y_end) / 2

    I = extend(C_ab, prod, aR * bR)
    out = ProductCorrelation(
        R, I,
        extend(C_abs, np.abs(a) * np.abs(b), np.abs(aR) * np.abs(bR)).real,
        extend(C_aa, np.abs(a) ** 2, np.abs(aR) ** 2).real,
        extend(C_bb, np.abs(b) ** 2, np.abs(bR) ** 2).real,
    )
    if R.size >= 8:
        out.fit = decay_fit(R, np.abs(I), fit_range)
    if budget is not None:
        out.predicted_slope = 1.0 - budget.product_exponent
    return out
