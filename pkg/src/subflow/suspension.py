"""Suspension flow data: roofs, tiling lengths, cylindrical functions, twisted sums.

A point of the flow is represented by an ``Orbit`` (a long prefix of a
substitution word laid out as tiles of length ``s[a]``) plus a time offset
``t0`` along it.  All integrals of piecewise-linear profiles against
``exp(-2 pi i omega t)`` are evaluated in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import PrefixTooShort
from .perron import EigenSystem
from .substitution import ReturnWord, Substitution, population_vector, prefix_orbit

TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# roof vectors

@dataclass(frozen=True)
class RoofVector:
    s: np.ndarray
    provenance: str = "explicit"

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("roof vector must be a 1-d array of length m >= 2")
        if abs(s.sum() - 1.0) > 1e-12:
            raise ValueError(f"roof vector must lie on the simplex (sum = {s.sum()!r})")
        if s.min() < 1e-6:
            raise ValueError("roof entries must be >= 1e-6")
        object.__setattr__(self, "s", s)

    @classmethod
    def explicit(cls, s: Sequence[float]) -> "RoofVector":
        return cls(np.asarray(s, dtype=float), "explicit")

    @classmethod
    def perron(cls, es: EigenSystem) -> "RoofVector":
        s = es.perron_roof()
        return cls(s / s.sum(), "perron")

    @classmethod
    def random(cls, m: int, seed: int) -> "RoofVector":
        rng = np.random.default_rng(seed)
        while True:
            s = rng.dirichlet(np.ones(m))
            if s.min() >= 1e-6:
                return cls(s / s.sum(), f"random({seed})")

    def __len__(self):
        return self.s.size


def _roof_array(s) -> np.ndarray:
    return s.s if isinstance(s, RoofVector) else np.asarray(s, dtype=float)


# --------------------------------------------------------------------------
# closed-form Fourier integrals of linear pieces

def _e0(u: np.ndarray) -> np.ndarray:
    """(1 - exp(-u)) / u, stable near 0."""
    u = np.asarray(u, dtype=complex)
    out = np.empty_like(u)
    small = np.abs(u) < 0.5
    us = u[small]
    acc = np.zeros_like(us)
    term = np.ones_like(us)
    for n in range(24):
        acc += term / (n + 1)
        term = term * (-us) / (n + 1)
    out[small] = acc
    ub = u[~small]
    out[~small] = (1 - np.exp(-ub)) / ub
    return out


def _e1(u: np.ndarray) -> np.ndarray:
    """int_0^1 x exp(-u x) dx, stable near 0."""
    u = np.asarray(u, dtype=complex)
    out = np.empty_like(u)
    small = np.abs(u) < 0.5
    us = u[small]
    acc = np.zeros_like(us)
    term = np.ones_like(us)  # (-u)^n / n!
    for n in range(24):
        acc += term / (n + 2)
        term = term * (-us) / (n + 1)
    out[small] = acc
    ub = u[~small]
    out[~small] = (1 - np.exp(-ub) * (1 + ub)) / ub**2
    return out


def linear_piece_fourier(x0, x1, y0, y1, omega: float) -> np.ndarray:
    """int_{x0}^{x1} exp(-2 pi i omega t) * (linear from y0 to y1) dt."""
    x0 = np.asarray(x0, dtype=float)
    h = np.asarray(x1, dtype=float) - x0
    u = 1j * TWO_PI * omega * h
    y0 = np.asarray(y0, dtype=complex)
    dy = np.asarray(y1, dtype=complex) - y0
    return h * np.exp(-1j * TWO_PI * omega * x0) * (y0 * _e0(u) + dy * _e1(u))


# --------------------------------------------------------------------------
# Lip-cylindrical functions

@dataclass
class CylFunction:
    """Per-letter piecewise-linear profiles psi_a on [0, s_a] (complex values)."""

    knots_t: list[np.ndarray]
    knots_y: list[np.ndarray]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if len(self.knots_t) != len(self.knots_y):
            raise ValueError("knot lists differ in length")
        self.knots_t = [np.asarray(t, dtype=float) for t in self.knots_t]
        self.knots_y = [np.asarray(y, dtype=complex) for y in self.knots_y]
        for t, y in zip(self.knots_t, self.knots_y):
            if t.size < 2 or t.size != y.size:
                raise ValueError("each profile needs >= 2 knots with matching values")
            if t[0] != 0.0 or np.any(np.diff(t) <= 0):
                raise ValueError("knots must start at 0 and increase strictly")

    @property
    def m(self) -> int:
        return len(self.knots_t)

    @property
    def widths(self) -> np.ndarray:
        return np.array([t[-1] for t in self.knots_t])

    # construction ---------------------------------------------------------

    @classmethod
    def constant(cls, values: Sequence[complex], s) -> "CylFunction":
        s = _roof_array(s)
        return cls([np.array([0.0, w]) for w in s], [np.array([v, v]) for v in values])

    @classmethod
    def from_knots(cls, profiles: Sequence[Sequence[Sequence[float]]], s,
                   domain: str = "relative") -> "CylFunction":
        """Build from per-letter ``[[t, y], ...]`` knot lists.

        With ``domain="relative"`` knot abscissae live on [0, 1] and are
        stretched to [0, s_a]; with ``"absolute"`` they are taken as given.
        Profiles ending before the tile end are extended constantly; knots
        past it are cut off by interpolation.
        """
        s = _roof_array(s)
        ts, ys = [], []
        for a, knots in enumerate(profiles):
            arr = [(float(k[0]), _as_complex(k[1])) for k in knots]
            t = np.array([k[0] for k in arr])
            y = np.array([k[1] for k in arr], dtype=complex)
            width = s[a]
            if domain == "relative":
                t = t * width
            elif domain != "absolute":
                raise ValueError(f"unknown domain {domain!r}")
            if t.size == 1:
                t, y = np.array([0.0, width]), np.array([y[0], y[0]])
            if t[-1] < width:
                t, y = np.append(t, width), np.append(y, y[-1])
            elif t[-1] > width:
                y_end = np.interp(width, t, y.real) + 1j * np.interp(width, t, y.imag)
                keep = t < width
                t, y = np.append(t[keep], width), np.append(y[keep], y_end)
            ts.append(t)
            ys.append(y)
        return cls(ts, ys)

    @classmethod
    def from_json(cls, obj: Mapping, letters: Sequence[str], s,
                  freq: np.ndarray | None = None) -> "CylFunction":
        """``{"psi": {"a": {"knots": [[0, 1.0], [0.5, -1.0]]}}, "normalize_mean_zero": true}``."""
        psi = obj.get("psi", {})
        unknown = set(psi) - set(letters)
        if unknown:
            raise ValueError(f"profiles given for unknown letters {sorted(unknown)}")
        profiles = [psi.get(c, {"knots": [[0, 0.0], [1, 0.0]]})["knots"] for c in letters]
        f = cls.from_knots(profiles, s, obj.get("domain", "relative"))
        if obj.get("normalize_mean_zero", False):
            if freq is None:
                raise ValueError("letter frequencies needed to normalise the mean")
            f = f.normalized(freq)
        return f

    # scalar data ----------------------------------------------------------

    def lipschitz_norm(self) -> float:
        """max_a (sup |psi_a| + Lip(psi_a))."""
        if "lip" not in self._cache:
            vals = []
            for t, y in zip(self.knots_t, self.knots_y):
                lip = np.max(np.abs(np.diff(y)) / np.diff(t))
                vals.append(np.max(np.abs(y)) + lip)
            self._cache["lip"] = float(max(vals))
        return self._cache["lip"]

    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(y)) for y in self.knots_y))

    def integrals(self) -> np.ndarray:
        """int_0^{s_a} psi_a, exact (trapezoid on linear pieces)."""
        if "int" not in self._cache:
            self._cache["int"] = np.array(
                [np.sum(np.diff(t) * (y[1:] + y[:-1]) / 2) for t, y in zip(self.knots_t, self.knots_y)]
            )
        return self._cache["int"]

    def square_integrals(self) -> np.ndarray:
        """int_0^{s_a} |psi_a|^2, exact for linear pieces."""
        out = []
        for t, y in zip(self.knots_t, self.knots_y):
            y0, y1 = y[:-1], y[1:]
            out.append(np.sum(np.diff(t) * (abs(y0) ** 2 + (y0 * y1.conj()).real + abs(y1) ** 2) / 3))
        return np.array(out)

    def mean(self, freq: np.ndarray) -> complex:
        """Mean against the flow-invariant probability measure."""
        return complex(np.dot(freq, self.integrals()) / np.dot(freq, self.widths))

    def l2_norm_sq(self, freq: np.ndarray) -> float:
        return float(np.dot(freq, self.square_integrals()) / np.dot(freq, self.widths))

    def is_mean_zero(self, freq: np.ndarray, tol: float = 1e-10) -> bool:
        return abs(np.dot(freq, self.integrals())) <= tol

    def normalized(self, freq: np.ndarray) -> "CylFunction":
        c = self.mean(freq)
        return CylFunction(list(self.knots_t), [y - c for y in self.knots_y])

    # evaluation -----------------------------------------------------------

    def evaluate(self, letters: np.ndarray, tau: np.ndarray) -> np.ndarray:
        """psi_{letters}(tau), vectorised."""
        letters = np.asarray(letters)
        tau = np.asarray(tau, dtype=float)
        out = np.zeros(np.broadcast(letters, tau).shape, dtype=complex)
        letters, tau = np.broadcast_arrays(letters, tau)
        for a in range(self.m):
            sel = letters == a
            if np.any(sel):
                t, y = self.knots_t[a], self.knots_y[a]
                out[sel] = np.interp(tau[sel], t, y.real) + 1j * np.interp(tau[sel], t, y.imag)
        return out

    def fourier(self, omega: float) -> np.ndarray:
        """psi_hat_a(omega) = int_0^{s_a} exp(-2 pi i omega t) psi_a(t) dt for every letter."""
        return np.array([
            np.sum(linear_piece_fourier(t[:-1], t[1:], y[:-1], y[1:], omega))
            for t, y in zip(self.knots_t, self.knots_y)
        ])

    def partial_fourier(self, letters: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                        omega: float) -> np.ndarray:
        """int_lo^hi exp(-2 pi i omega t) psi_a(t) dt, batched over (a, lo, hi)."""
        letters = np.asarray(letters)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        out = np.zeros(letters.shape, dtype=complex)
        for a in range(self.m):
            sel = letters == a
            if not np.any(sel):
                continue
            t, y = self.knots_t[a], self.knots_y[a]
            la, ha = lo[sel], hi[sel]
            acc = np.zeros(la.shape, dtype=complex)
            for k in range(t.size - 1):
                x0 = np.clip(la, t[k], t[k + 1])
                x1 = np.clip(ha, t[k], t[k + 1])
                ok = x1 > x0
                if not np.any(ok):
                    continue
                slope = (y[k + 1] - y[k]) / (t[k + 1] - t[k])
                y0 = y[k] + slope * (x0[ok] - t[k])
                y1 = y[k] + slope * (x1[ok] - t[k])
                acc[ok] += linear_piece_fourier(x0[ok], x1[ok], y0, y1, omega)
            out[sel] = acc
        return out


def _as_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


# --------------------------------------------------------------------------
# orbits laid out as tilings

class Orbit:
    """A finite word laid out as consecutive tiles of lengths s[a].

    Tile starts are computed from exact integer letter counts, so the
    absolute error of ``starts[j]`` is a few ulps of its magnitude.
    """

    def __init__(self, word: np.ndarray, s):
        self.word = np.asarray(word)
        self.s = _roof_array(s)
        m = self.s.size
        starts = np.zeros(self.word.size + 1)
        for a in range(m):
            counts = np.cumsum(self.word == a, dtype=np.int64)
            starts[1:] += counts * self.s[a]
        self.starts = starts

    @property
    def n_tiles(self) -> int:
        return int(self.word.size)

    @property
    def length(self) -> float:
        return float(self.starts[-1])

    def locate(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tile index and local height of flow times u (u <= length)."""
        u = np.asarray(u, dtype=float)
        j = np.searchsorted(self.starts, u, side="right") - 1
        j = np.clip(j, 0, self.n_tiles - 1)
        return j, u - self.starts[j]

    def sample(self, f: CylFunction, u: np.ndarray) -> np.ndarray:
        j, tau = self.locate(u)
        return f.evaluate(self.word[j], tau)


def orbit_with_length(sub: Substitution, s, flow_length: float, letter: int = 0,
                      freq: np.ndarray | None = None) -> Orbit:
    """Shortest prefix orbit of zeta^n(letter) whose tiling covers ``flow_length``."""
    s = _roof_array(s)
    if freq is not None:
        mean_tile = float(np.dot(freq, s))
    else:
        mean_tile = float(np.min(s))
    n = int(math.ceil(1.02 * flow_length / mean_tile)) + 64
    while True:
        orbit = Orbit(prefix_orbit(sub, letter, n), s)
        if orbit.length >= flow_length:
            return orbit
        n = int(n * 1.25) + 64


GOLDEN_STEP = 0.6180339887498949


def start_points(n: int, span: float, seed: int) -> np.ndarray:
    """Low-discrepancy offsets (u0 + i/phi mod 1) * span along one orbit, u0 from the seed."""
    if span <= 0:
        raise PrefixTooShort("no room for starting points on the orbit prefix")
    u0 = np.random.default_rng(seed).random()
    return np.mod(u0 + np.arange(n) * GOLDEN_STEP, 1.0) * span


def tiling_length(w: Sequence[int], s) -> float:
    """|w|_s = <l(w), s>."""
    s = _roof_array(s)
    return float(np.dot(population_vector(w, s.size).astype(float), s))


def twisted_sum(w: Sequence[int], a: int, omega: float, s) -> complex:
    """Phi_a(w, omega) = sum_j [w_j = a] exp(-2 pi i omega |w_0..w_j|_s)."""
    w = np.asarray(w)
    if w.size == 0:
        return 0j
    orbit = Orbit(w, s)
    ends = orbit.starts[1:][w == a]
    return complex(np.sum(np.exp(-1j * TWO_PI * np.mod(omega * ends, 1.0))))


# --------------------------------------------------------------------------
# twisted Birkhoff integrals

class TwistedIntegrator:
    """Evaluates S_R^{(x, t0)}(f, omega) for many (t0, R) at one frequency.

    One O(N) pass builds the cumulative integral over whole tiles; each
    query then costs two tile lookups and two partial-tile integrals.
    """

    def __init__(self, orbit: Orbit, f: CylFunction, omega: float):
        self.orbit, self.f, self.omega = orbit, f, float(omega)
        hat = f.fourier(self.omega)
        phases = np.exp(-1j * TWO_PI * np.mod(self.omega * orbit.starts[:-1], 1.0))
        self.cum = np.concatenate([[0j], np.cumsum(phases * hat[orbit.word])])

    def antiderivative(self, u: np.ndarray) -> np.ndarray:
        """F(u) = int_0^u exp(-2 pi i omega tau) f(h_tau x) dtau."""
        o = self.orbit
        j, tau = o.locate(u)
        phase = np.exp(-1j * TWO_PI * np.mod(self.omega * o.starts[j], 1.0))
        part = self.f.partial_fourier(o.word[j], np.zeros_like(tau), tau, self.omega)
        return self.cum[j] + phase * part

    def __call__(self, t0, R) -> np.ndarray:
        t0 = np.asarray(t0, dtype=float)
        R = np.asarray(R, dtype=float)
        t0, R = np.broadcast_arrays(t0, R)
        if np.any(t0 < 0) or np.any(t0 + R > self.orbit.length * (1 + 1e-15)):
            raise PrefixTooShort(
                f"need flow time {float(np.max(t0 + R))}, orbit has {self.orbit.length}"
            )
        F1 = self.antiderivative(t0 + R)
        F0 = self.antiderivative(t0)
        return np.exp(1j * TWO_PI * np.mod(self.omega * t0, 1.0)) * (F1 - F0)


def twisted_birkhoff(x: Orbit | np.ndarray, t0: float, f: CylFunction, omega: float,
                     R: float, s=None) -> complex:
    """S_R^{(x,t0)}(f, omega) = int_0^R exp(-2 pi i omega t) f(h_t(x, t0)) dt."""
    orbit = x if isinstance(x, Orbit) else Orbit(x, s)
    return complex(TwistedIntegrator(orbit, f, omega)(t0, R))


# --------------------------------------------------------------------------
# Diophantine product bound

@dataclass(frozen=True)
class BoundConstants:
    c1: float = 0.5
    C: float = 1.0
    C_prime: float = 1.0
    C2: float = 0.0

    def __post_init__(self):
        if not 0 < self.c1 < 1:
            raise ValueError("c1 must lie in (0, 1)")
        if self.C <= 0 or self.C_prime <= 0 or self.C2 < 0:
            raise ValueError("C, C' must be positive and C2 non-negative")


def dist_to_int(x) -> np.ndarray:
    """||x||: distance to the nearest integer."""
    x = np.asarray(x, dtype=float)
    return np.abs(x - np.round(x))


def return_word_lengths(v: ReturnWord, s, S: np.ndarray, n: int) -> np.ndarray:
    """|zeta^k(v)|_s for k = 0..n, from exact population vectors."""
    s = _roof_array(s)
    pop = population_vector(v.v, s.size).astype(object)
    out = []
    P = np.identity(s.size, dtype=np.int64).astype(object)
    Sobj = np.asarray(S).astype(object)
    for _ in range(n + 1):
        out.append(float(np.dot(P.dot(pop).astype(float), s)))
        P = Sobj.dot(P)
    return np.array(out)


def product_factors(omega: float, v: ReturnWord, s, es: EigenSystem, kmax: int,
                    c1: float) -> np.ndarray:
    """1 - c1 ||omega |zeta^k(v)|_s||^2 for k = 0..kmax."""
    if kmax < 0:
        return np.zeros(0)
    lengths = return_word_lengths(v, s, es.S, kmax)
    return 1.0 - c1 * dist_to_int(omega * lengths) ** 2


def product_bound(omega: float, R: float, v: ReturnWord, s, bc: BoundConstants,
                  es: EigenSystem) -> tuple[float, np.ndarray]:
    """Upper bound on |S_R| from the return-word product; also returns the factors."""
    if R <= 1:
        raise ValueError("R must exceed 1")
    kmax = math.floor(math.log(R) / math.log(es.theta) - bc.C2 + 1e-9)
    factors = product_factors(omega, v, s, es, kmax, bc.c1)
    scale = min(1.0, 1.0 / abs(omega)) if omega != 0 else 1.0
    return bc.C_prime * scale * R * float(np.prod(factors)), factors


def word_product_bound(omega: float, n: int, v: ReturnWord, s, es: EigenSystem,
                       c1: float) -> float:
    """prod_{k<n} (1 - c1 ||omega |zeta^k(v)|_s||^2), the word-level factor."""
    return float(np.prod(product_factors(omega, v, s, es, n - 1, c1)))

