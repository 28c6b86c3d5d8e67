"""Exact and numeric linear algebra of the substitution matrix.

Characteristic polynomial (exact integers), irreducibility over Q, the
eigen system with its dual basis, Vandermonde constants and the
parametrisation of roof vectors by the coefficients b_j.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .errors import (
    DegenerateDual,
    DegreeTooLarge,
    NumericFailure,
    RepeatedRoots,
    SingularVandermonde,
)
from .substitution import ReturnWord, matrix_power_exact, population_vector

MAX_IRREDUCIBILITY_DEGREE = 8


@dataclass(frozen=True)
class CharPoly:
    coefficients: tuple[int, ...]   # monic, highest degree first
    irreducible: bool | None        # None: degree too large to decide

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def recurrence(self) -> tuple[int, ...]:
        """c_0..c_{m-1} with x^m = sum_i c_i x^i."""
        return tuple(-c for c in reversed(self.coefficients[1:]))

    def __call__(self, x):
        acc = 0
        for c in self.coefficients:
            acc = acc * x + c
        return acc


# --------------------------------------------------------------------------
# exact polynomial helpers (coefficient lists, highest degree first)

def faddeev_leverrier(S) -> tuple[int, ...]:
    """Exact characteristic polynomial det(xI - S) of an integer matrix."""
    A = [[int(v) for v in row] for row in np.asarray(S)]
    m = len(A)
    coeffs = [1]
    M = [[0] * m for _ in range(m)]
    c_prev = 1
    for k in range(1, m + 1):
        # M_k = A M_{k-1} + c_{k-1} I
        AM = [[sum(A[i][t] * M[t][j] for t in range(m)) for j in range(m)] for i in range(m)]
        M = [[AM[i][j] + (c_prev if i == j else 0) for j in range(m)] for i in range(m)]
        tr = sum(sum(A[i][t] * M[t][i] for t in range(m)) for i in range(m))
        if tr % k:
            raise ArithmeticError("non-integral Faddeev-LeVerrier step")
        c_prev = -tr // k
        coeffs.append(c_prev)
    return tuple(coeffs)


def _poly_divmod(num: Sequence, den: Sequence) -> tuple[list, list]:
    num = [Fraction(c) for c in num]
    den = [Fraction(c) for c in den]
    if len(num) < len(den):
        return [Fraction(0)], num
    quot = []
    rem = num[:]
    while len(rem) >= len(den):
        q = rem[0] / den[0]
        quot.append(q)
        rem = [r - q * d for r, d in zip(rem, den + [0] * (len(rem) - len(den)))][1:]
    return quot, rem


def _strip(p: list) -> list:
    i = 0
    while i < len(p) - 1 and p[i] == 0:
        i += 1
    return p[i:]


def _poly_gcd(a: Sequence, b: Sequence) -> list:
    a, b = _strip([Fraction(c) for c in a]), _strip([Fraction(c) for c in b])
    while any(b):
        _, r = _poly_divmod(a, b)
        a, b = b, _strip(r) if r else [Fraction(0)]
    return [c / a[0] for c in a]


def is_squarefree(coeffs: Sequence[int]) -> bool:
    n = len(coeffs) - 1
    deriv = [c * (n - i) for i, c in enumerate(coeffs[:-1])]
    return len(_poly_gcd(coeffs, deriv)) == 1


def _divisors(v: int) -> list[int]:
    v = abs(v)
    small, large = [], []
    d = 1
    while d * d <= v:
        if v % d == 0:
            small.append(d)
            if d * d != v:
                large.append(v // d)
        d += 1
    return small + large[::-1]


def _mignotte(coeffs: Sequence[int], d: int) -> list[float]:
    """|g_j| <= binom(d, j) ||f||_2 for every coefficient of a degree-d factor g of f."""
    norm2 = math.sqrt(sum(c * c for c in coeffs))
    return [math.comb(d, j) * norm2 for j in range(d + 1)]


def _has_monic_factor(coeffs: Sequence[int], d: int, roots: Sequence) -> bool:
    """Search for a monic integer factor of degree d among products of d roots.

    Such a factor is prod (x - r) over some d roots of f; its coefficients are
    rounded to integers, checked against the Mignotte bound and confirmed by
    exact division, so a reported factor is always a true one.
    """
    bound = _mignotte(coeffs, d)
    for subset in itertools.combinations(roots, d):
        with mpmath.workdps(60):
            g = [mpmath.mpc(1)]
            for r in subset:
                g = [a - r * b for a, b in zip(g + [0], [0] + g)]
        ints = []
        for c, b in zip(g, bound):
            if abs(c.imag) > 1e-6 or abs(c.real - mpmath.nint(c.real)) > 1e-6:
                break
            v = int(mpmath.nint(c.real))
            if abs(v) > b + 1e-9:
                break
            ints.append(v)
        else:
            _, rem = _poly_divmod(coeffs, ints)
            if not any(rem):
                return True
    return False


def _roots_mp(coeffs: Sequence[int], dps: int = 60) -> list:
    with mpmath.workdps(dps):
        roots, err = mpmath.polyroots([int(c) for c in coeffs], maxsteps=400,
                                      extraprec=4 * dps, error=True)
    if err > 1e-20:
        raise NumericFailure(f"root isolation too coarse for the factor search (error {err})")
    return list(roots)


def is_irreducible(coeffs: Sequence[int]) -> bool:
    """Irreducibility over Q of a monic integer polynomial.

    Linear factors are excluded by the rational-root test; higher-degree
    factors by the root-subset search, whose positives are confirmed by
    exact division.
    """
    n = len(coeffs) - 1
    if n > MAX_IRREDUCIBILITY_DEGREE:
        raise DegreeTooLarge(f"degree {n} > {MAX_IRREDUCIBILITY_DEGREE}")
    if n <= 1:
        return True
    if coeffs[-1] == 0:
        return False
    # rational roots of a monic integer polynomial are integer divisors of c_0
    for r in _divisors(coeffs[-1]):
        for x in (r, -r):
            if sum(c * x ** (n - i) for i, c in enumerate(coeffs)) == 0:
                return False
    if n < 4:
        return True
    if not is_squarefree(coeffs):
        return False
    roots = _roots_mp(coeffs)
    return not any(_has_monic_factor(coeffs, d, roots) for d in range(2, n // 2 + 1))


def char_poly_analysis(S) -> CharPoly:
    coeffs = faddeev_leverrier(S)
    try:
        irreducible: bool | None = is_irreducible(coeffs)
    except DegreeTooLarge:
        irreducible = None
    return CharPoly(coeffs, irreducible)


# --------------------------------------------------------------------------
# eigen system

@dataclass(frozen=True)
class EigenSystem:
    S: np.ndarray
    char_poly: CharPoly
    eigenvalues: np.ndarray      # complex, |theta_1| > |theta_2| >= ...
    right: np.ndarray            # columns e_j, unit l2 norm
    dual: np.ndarray             # rows e_j*, <e_i, e_j*> = delta_ij (bilinear)
    tol: float

    @property
    def m(self) -> int:
        return len(self.eigenvalues)

    @property
    def theta(self) -> float:
        return float(self.eigenvalues[0].real)

    @property
    def q(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues) <= 1 + self.tol))

    @property
    def beta(self) -> float:
        return math.log(abs(self.eigenvalues[1])) / math.log(self.theta)

    @property
    def nu_plus_1(self) -> int:
        mod2 = abs(self.eigenvalues[1])
        return int(np.sum(np.abs(np.abs(self.eigenvalues) - mod2) <= 1e-9 * mod2))

    @property
    def expanding_modulus(self) -> float:
        """|theta_{m-q}|: the smallest modulus exceeding one."""
        return float(abs(self.eigenvalues[self.m - self.q - 1]))

    def frequencies(self) -> np.ndarray:
        """Letter frequencies: the Perron right eigenvector normalised to sum one."""
        e1 = self.right[:, 0].real
        return e1 / e1.sum()

    def perron_roof(self) -> np.ndarray:
        """Perron eigenvector of the transpose matrix, normalised to the simplex."""
        d1 = self.dual[0].real
        return d1 / d1.sum()


def _polish(coeffs: Sequence[int], z: complex, iters: int = 8) -> complex:
    c = [complex(v) for v in coeffs]
    n = len(c) - 1
    dc = [c[i] * (n - i) for i in range(n)]
    for _ in range(iters):
        p = dp = 0j
        for v in c:
            p = p * z + v
        for v in dc:
            dp = dp * z + v
        if dp == 0:
            break
        step = p / dp
        z -= step
        if abs(step) <= 1e-17 * max(1.0, abs(z)):
            break
    return z


def _null_vector(S: np.ndarray, z: complex) -> np.ndarray:
    A = S.astype(complex) - z * np.eye(S.shape[0])
    _, _, vh = np.linalg.svd(A)
    v = vh[-1].conj()
    v /= np.linalg.norm(v)
    k = int(np.argmax(np.abs(v) > (1 - 1e-9) * np.abs(v).max()))
    v *= abs(v[k]) / v[k]
    return v


def eigen_system(S, tol: float = 1e-12) -> EigenSystem:
    """Eigenvalues, unit right eigenvectors and bilinear dual basis of S.

    Roots come from the exact characteristic polynomial (companion-matrix
    eigenvalues, Newton-polished); eigenvectors are least singular vectors
    of S - theta I.
    """
    S = np.asarray(S, dtype=np.int64)
    cp = char_poly_analysis(S)
    coeffs = cp.coefficients
    if not is_squarefree(coeffs):
        raise RepeatedRoots("characteristic polynomial has a repeated root")
    roots = np.roots([float(c) for c in coeffs]).astype(complex)
    roots = np.array([_polish(coeffs, z) for z in roots])
    scale = max(abs(c) for c in coeffs)
    for z in roots:
        if abs(cp(z)) > tol * scale * max(1.0, abs(z)) ** len(roots) * 1e3:
            raise NumericFailure(f"root {z} not resolved to tolerance")
    # snap near-real roots, then pair conjugates exactly
    roots = np.array([complex(z.real, 0.0) if abs(z.imag) <= 1e-13 * max(1, abs(z)) else z
                      for z in roots])
    order = sorted(range(len(roots)), key=lambda i: (-round(abs(roots[i]), 12), -roots[i].imag))
    roots = roots[order]
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            if abs(roots[i] - roots[j]) < 10 * tol:
                raise RepeatedRoots("root separation below tolerance")
    if roots[0].imag != 0 or roots[0].real <= 0 or (len(roots) > 1 and abs(roots[1]) >= roots[0].real):
        raise NumericFailure("no dominant positive real eigenvalue")

    m = len(roots)
    E = np.zeros((m, m), dtype=complex)
    for j, z in enumerate(roots):
        if z.imag < 0 and j > 0 and np.isclose(roots[j - 1], z.conjugate(), rtol=1e-12, atol=0):
            E[:, j] = E[:, j - 1].conj()
            continue
        v = _null_vector(S, z)
        if z.imag == 0:
            v = v.real.astype(complex)
            v /= np.linalg.norm(v)
        E[:, j] = v
    dual = np.linalg.inv(E)
    for j, z in enumerate(roots):
        if z.imag < 0 and j > 0 and np.isclose(roots[j - 1], z.conjugate(), rtol=1e-12, atol=0):
            dual[j] = dual[j - 1].conj()
        elif z.imag == 0:
            dual[j] = dual[j].real
    return EigenSystem(S=S, char_poly=cp, eigenvalues=roots, right=E, dual=dual, tol=tol)


# --------------------------------------------------------------------------
# Vandermonde constants

@dataclass(frozen=True)
class VandermondeData:
    Theta: np.ndarray
    Theta_inv: np.ndarray
    norm: float
    norm_inv: float
    rho: float
    L: float

    @property
    def C_Theta(self) -> float:
        return 0.5 * self.norm_inv


def inf_norm(A: np.ndarray) -> float:
    """Operator norm on l^infinity: maximal absolute row sum."""
    return float(np.abs(A).sum(axis=1).max())


def vandermonde_constants(es: EigenSystem) -> VandermondeData:
    theta = es.eigenvalues
    m = len(theta)
    Theta = np.vstack([theta**i for i in range(m)])
    if np.linalg.cond(Theta) > 1e12:
        raise SingularVandermonde("Vandermonde matrix is numerically singular")
    Theta_inv = np.linalg.inv(Theta)
    norm, norm_inv = inf_norm(Theta), inf_norm(Theta_inv)
    prod = es.theta * norm * norm_inv
    return VandermondeData(Theta, Theta_inv, norm, norm_inv, 0.5 / (1 + prod), 2 + prod)


# --------------------------------------------------------------------------
# coordinates b_j and the map to a = b / b_1

@dataclass(frozen=True)
class ParamPoint:
    b: np.ndarray
    a: np.ndarray
    s: np.ndarray
    v: ReturnWord

    def tiling_length_series(self, es: EigenSystem, n: int) -> float:
        return float((self.b * es.eigenvalues**n).sum().real)


def param_point(s, v: ReturnWord, es: EigenSystem, check_upto: int = 10,
                dual_tol: float = 1e-10) -> ParamPoint:
    """b_j = <e_j, s><l(v), e_j*> and a = b / b_1, with a consistency check.

    The identity |zeta^n(v)|_s = sum_j b_j theta_j^n is verified against the
    exact population vectors S^n l(v) for n <= check_upto.
    """
    s = np.asarray(s, dtype=float)
    pop = population_vector(v.v, es.m)
    proj = es.dual @ pop.astype(float)
    if np.min(np.abs(proj)) < dual_tol * np.linalg.norm(pop):
        raise DegenerateDual("<l(v), e_j*> vanishes for some j")
    b = (es.right.T @ s) * proj
    b[0] = b[0].real
    a = b / b[0]
    a[0] = 1.0
    point = ParamPoint(b=b, a=a, s=s, v=v)
    for n in range(check_upto + 1):
        exact = float(np.dot(matrix_power_exact(es.S, n).dot(pop.astype(object)).astype(float), s))
        series = (b * es.eigenvalues**n).sum()
        if abs(series - exact) > 1e-8 * abs(exact) or abs(series.imag) > 1e-8 * abs(exact):
            raise NumericFailure(f"tiling-length identity fails at n={n}: {series} vs {exact}")
    return point
