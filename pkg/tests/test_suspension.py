from __future__ import annotations

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from conftest import THETA
from subflow.errors import PrefixTooShort
from subflow.substitution import ReturnWord, apply_power, find_return_word, population_vector
from subflow.suspension import (
    BoundConstants,
    CylFunction,
    Orbit,
    RoofVector,
    TwistedIntegrator,
    dist_to_int,
    product_bound,
    product_factors,
    start_points,
    tiling_length,
    twisted_birkhoff,
    twisted_sum,
    word_product_bound,
)

# quad warns on sub-intervals of near-zero length; the comparisons below still bound its error
pytestmark = pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")

PROFILES = ([[0, 1.0], [0.4, -0.5], [1, 0.3]], [[0, [0.2, -1.0]], [0.7, 0.8], [1, -0.1]])


def direct_phi(w, a, omega, s):
    """Term-by-term evaluation with the running length including w_j."""
    acc, total = 0j, 0.0
    for c in w:
        total += s[c]
        if c == a:
            acc += cmath.exp(-2j * math.pi * omega * total)
    return acc


def quad_birkhoff(orbit: Orbit, f: CylFunction, omega, t0, R):
    """Adaptive quadrature of exp(-2 pi i omega t) f(h_t) piece by piece."""
    lo, hi = t0, t0 + R
    pts = [lo, hi]
    for j in range(orbit.n_tiles):
        a, st0 = orbit.word[j], orbit.starts[j]
        for k in f.knots_t[a]:
            if lo < st0 + k < hi:
                pts.append(st0 + k)
    pts = np.unique(pts)
    total = 0j
    for x0, x1 in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (x0 + x1)
        j, _ = orbit.locate(np.array([mid]))
        a, st0 = orbit.word[j[0]], orbit.starts[j[0]]
        kt, ky = f.knots_t[a], f.knots_y[a]

        def g(t, part):
            psi = complex(np.interp(t - st0, kt, ky.real), np.interp(t - st0, kt, ky.imag))
            v = psi * cmath.exp(-2j * math.pi * omega * (t - t0))
            return v.real if part == 0 else v.imag

        re = quad(g, x0, x1, args=(0,), epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        im = quad(g, x0, x1, args=(1,), epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        total += re + 1j * im
    return total


def test_roof_vectors(zstar_es):
    assert np.allclose(RoofVector.perron(zstar_es).s.sum(), 1.0)
    r = RoofVector.random(3, seed=7)
    assert abs(r.s.sum() - 1) < 1e-12 and r.s.min() >= 1e-6
    assert np.array_equal(RoofVector.random(3, seed=7).s, r.s)
    with pytest.raises(ValueError):
        RoofVector.explicit([0.5, 0.6])
    with pytest.raises(ValueError):
        RoofVector.explicit([1.0, 0.0])


def test_tiling_length_examples(zstar):
    assert tiling_length(zstar.word("abbb"), [0.5, 0.5]) == 2.0
    assert tiling_length([], [0.5, 0.5]) == 0
    w3 = apply_power(zstar, "a", 3)
    counts = [zstar.format(w3).count(c) for c in "ab"]
    assert tiling_length(w3, [0.25, 0.75]) == pytest.approx(0.25 * counts[0] + 0.75 * counts[1])
    assert tiling_length(w3, [0.25, 0.75]) == pytest.approx(10.75)


def test_twisted_sum_examples(zstar):
    w = zstar.word("abbb")
    assert twisted_sum(w, 0, 0.0, [0.3, 0.7]) == 1
    assert abs(twisted_sum(zstar.word("ab"), 0, 1.0, [0.5, 0.5]) - (-1)) < 1e-15
    for om in np.linspace(-5, 5, 21):
        assert abs(twisted_sum(w, 1, om, [0.3, 0.7])) <= 3 + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=40), st.lists(st.integers(0, 1), max_size=40),
       st.floats(-20, 20), st.floats(0.05, 0.95), st.integers(0, 1))
def test_cocycle_and_counts(u, w, omega, x, a):
    s = np.array([x, 1 - x])
    uw = u + w
    lhs = twisted_sum(uw, a, omega, s)
    rhs = twisted_sum(u, a, omega, s) + cmath.exp(-2j * math.pi * omega * tiling_length(u, s)) * twisted_sum(w, a, omega, s)
    assert abs(lhs - rhs) <= 1e-12 * max(1, len(uw))
    assert abs(lhs - direct_phi(uw, a, omega, s)) <= 1e-11 * max(1, len(uw))
    count = population_vector(uw, 2)[a]
    assert abs(lhs) <= count + 1e-9
    assert twisted_sum(uw, a, 0.0, s) == count


def test_constant_function_integral(zstar):
    s = [0.4, 0.6]
    orbit = Orbit(apply_power(zstar, "a", 6), s)
    f = CylFunction.constant([1.0, 1.0], s)
    for R in (0.3, 5.0, 17.25):
        assert abs(twisted_birkhoff(orbit, 1.3, f, 0.0, R) - R) < 1e-12


def test_indicator_example(zstar):
    s = [0.5, 0.5]
    w = apply_power(zstar, "a", 6)
    orbit = Orbit(w, s)
    f = CylFunction.from_knots([[[0, 1.0]], [[0, 0.0]]], s)
    R = tiling_length(apply_power(zstar, "a", 4), s)
    got = twisted_birkhoff(orbit, 0.0, f, 0.7, R)
    want = quad_birkhoff(orbit, f, 0.7, 0.0, R)
    assert abs(got - want) <= 1e-6 * abs(want)


def test_phase_convention(zstar):
    """Over whole tiles S_R = sum_a psi_hat_a(omega) e^{2 pi i omega s_a} Phi_a(w, omega)."""
    s = np.array([0.35, 0.65])
    w = apply_power(zstar, "a", 5)
    f = CylFunction.from_knots(PROFILES, s)
    orbit = Orbit(w, s)
    for om in (0.3, 1.0, math.sqrt(2), -2.7):
        hat = f.fourier(om)
        closed = sum(hat[a] * cmath.exp(2j * math.pi * om * s[a]) * twisted_sum(w, a, om, s)
                     for a in range(2))
        assert abs(twisted_birkhoff(orbit, 0.0, f, om, orbit.length) - closed) < 1e-10


def test_mean_zero_at_zero_frequency(zstar, zstar_es):
    s = np.array([0.35, 0.65])
    f = CylFunction.from_knots(PROFILES, s).normalized(zstar_es.frequencies())
    w = apply_power(zstar, "a", 6)
    orbit = Orbit(w, s)
    got = twisted_birkhoff(orbit, 0.0, f, 0.0, orbit.length)
    counts = population_vector(w, 2)
    assert abs(got - np.dot(f.integrals(), counts)) < 1e-10
    assert abs(got - quad_birkhoff(orbit, f, 0.0, 0.0, orbit.length)) < 1e-8 * max(1, abs(got))


def test_closed_form_vs_quadrature_random(zstar, rng):
    w = apply_power(zstar, "a", 6)
    for i in range(50):
        s = RoofVector.random(2, seed=i).s
        orbit = Orbit(w, s)
        f = CylFunction.from_knots(PROFILES, s)
        om = rng.uniform(-10, 10)
        R = rng.uniform(0.1, 1.0) * orbit.length
        t0 = rng.uniform(0, orbit.length - R)
        got = twisted_birkhoff(orbit, t0, f, om, R)
        want = quad_birkhoff(orbit, f, om, t0, R)
        assert abs(got - want) <= 1e-6 * max(abs(want), 1e-300) + 1e-12


def test_integrator_errors(zstar):
    s = [0.5, 0.5]
    orbit = Orbit(apply_power(zstar, "a", 3), s)
    ti = TwistedIntegrator(orbit, CylFunction.constant([1, 1], s), 1.0)
    with pytest.raises(PrefixTooShort):
        ti(0.0, orbit.length + 1)
    with pytest.raises(PrefixTooShort):
        start_points(4, 0.0, seed=0)


def test_cylfunction_norms(zstar_es):
    s = [0.5, 0.5]
    f = CylFunction.from_knots([[[0, 0.0], [1, 1.0]], [[0, 2.0]]], s)
    # psi_a(t) = 2t on [0, 1/2] (sup 1, slope 2); psi_b = 2
    assert f.lipschitz_norm() == pytest.approx(1.0 + 2.0)
    assert np.allclose(f.integrals(), [0.25, 1.0])
    assert np.allclose(f.square_integrals(), [1 / 6, 2.0])
    freq = zstar_es.frequencies()
    g = f.normalized(freq)
    assert g.is_mean_zero(freq)
    obj = {"psi": {"a": {"knots": [[0, 0.0], [1, 1.0]]}, "b": {"knots": [[0, 2.0], [1, 2.0]]}},
           "normalize_mean_zero": True}
    h = CylFunction.from_json(obj, ("a", "b"), s, freq)
    assert np.allclose(h.integrals(), g.integrals())


def test_product_bound_examples(zstar, zstar_es):
    v = ReturnWord((0,), 0, 3)
    s = [0.5, 0.5]
    bc = BoundConstants()
    bound, fac = product_bound(0.0, 50.0, v, s, bc, zstar_es)
    assert bound == pytest.approx(50.0) and np.all(fac == 1)
    # omega |v|_s = 1/2, single factor k = 0
    bound, fac = product_bound(1.0, 2.0, v, s, bc, zstar_es)
    assert fac.size == 1 and fac[0] == pytest.approx(1 - 0.5 / 4)
    # direct evaluation at omega = sqrt 2, R = theta^6
    om = math.sqrt(2)
    bound, fac = product_bound(om, THETA ** 6, v, s, bc, zstar_es)
    lengths = [tiling_length(apply_power(zstar, [0], k), s) for k in range(7)]
    expect = [1 - 0.5 * dist_to_int(om * L) ** 2 for L in lengths]
    assert np.allclose(fac, expect, rtol=0, atol=1e-14)
    assert bound == pytest.approx(THETA ** 6 / om * np.prod(expect))
    assert product_factors(om, v, s, zstar_es, -1, 0.5).size == 0


def test_product_bound_stability(zstar, zstar_es):
    """C_emp(n) = max_omega |Phi_a(zeta^n(b))| / (|zeta^n(b)|_s prod) stays below its early maximum."""
    rw = find_return_word(zstar)
    oms = np.linspace(1, 2, 100)
    for s in ([0.5, 0.5], zstar_es.perron_roof(), [0.3, 0.7]):
        for a in (0, 1):
            for b in (0, 1):
                C = []
                for n in range(1, 11):
                    w = apply_power(zstar, [b], n)
                    L = tiling_length(w, s)
                    C.append(max(abs(twisted_sum(w, a, om, s)) /
                                 (L * word_product_bound(om, n, rw, s, zstar_es, 0.5)) for om in oms))
                assert max(C[3:]) <= max(C[:3]) * (1 + 1e-12)
