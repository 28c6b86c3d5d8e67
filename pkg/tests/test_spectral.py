from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subflow.config import DEFAULT_PROFILES
from subflow.errors import AssumptionViolation, NoDecay, NonPositiveValue, NumericFailure
from subflow.perron import eigen_system, vandermonde_constants
from subflow.spectral import (
    CorrelationTable,
    HolderCertificate,
    TooFewPoints,
    decay_fit,
    exponent_budget,
    fejer_mass,
    orbit_correlation,
    running_max,
    select_onset,
    strichartz_sup,
    twisted_sup,
    varr_certificate,
)
from subflow.substitution import parse_substitution, substitution_matrix
from subflow.suspension import CylFunction, orbit_with_length


@pytest.fixture(scope="module")
def setup(zstar, zstar_es):
    s = zstar_es.perron_roof()
    freq = zstar_es.frequencies()
    f = CylFunction.from_knots(DEFAULT_PROFILES, s).normalized(freq)
    return zstar, s, freq, f


@pytest.fixture(scope="module")
def short_corr(setup):
    sub, s, freq, f = setup
    return orbit_correlation(f, sub, s, 20.0, 0.05, 200.0, seed=0, method="exact")


# --------------------------------------------------------------------------
# correlation

@pytest.mark.parametrize("method", ["exact", "sampled"])
def test_constant_function_correlation(setup, method):
    sub, s, freq, _ = setup
    c = 0.7 - 0.4j
    f = CylFunction.constant([c, c], s)
    table = orbit_correlation(f, sub, s, 5.0, 0.05, 50.0, seed=3, method=method)
    assert np.allclose(table.values, abs(c) ** 2, rtol=0, atol=1e-12)


def test_correlation_at_zero_is_norm(setup, short_corr):
    _, _, freq, f = setup
    assert abs(short_corr.zero - f.l2_norm_sq(freq)) < 1e-3


def test_correlation_no_revival(short_corr):
    late = short_corr.t >= 1.0
    assert np.all(np.abs(short_corr.values[late]) < short_corr.zero)


def test_sampled_matches_exact(setup, short_corr):
    sub, s, _, f = setup
    sampled = orbit_correlation(f, sub, s, 20.0, 0.05, 200.0, seed=0, method="sampled")
    assert np.max(np.abs(sampled.values - short_corr.values)) < 0.01 * short_corr.zero


def test_correlation_deterministic(setup):
    sub, s, _, f = setup
    a = orbit_correlation(f, sub, s, 10.0, 0.05, 100.0, seed=5)
    b = orbit_correlation(f, sub, s, 10.0, 0.05, 100.0, seed=5)
    assert np.array_equal(a.values, b.values)


def test_correlation_positive_definite(short_corr, rng):
    ts = rng.uniform(0, 10, 40)
    M = short_corr.at(ts[:, None] - ts[None, :])
    assert np.allclose(M, M.conj().T)
    assert np.linalg.eigvalsh(M).min() >= -1e-3 * short_corr.zero


def test_correlation_preconditions(setup):
    sub, s, _, f = setup
    with pytest.raises(ValueError):
        orbit_correlation(f, sub, s, 20.0, 0.05, 100.0)
    bad = CorrelationTable(np.array([0.0, 1.0]), np.array([1.0, 2.0 + 0j]), 10.0, 4, "exact")
    with pytest.raises(NumericFailure):
        bad.check()


# --------------------------------------------------------------------------
# Fejer mass

def test_fejer_constant_function(setup):
    sub, s, freq, _ = setup
    f = CylFunction.constant([1.0, 1.0], s)
    orbit = orbit_with_length(sub, s, 200.0, freq=freq)
    R = np.array([1.0, 2.5, 10.0, 37.0])
    G = fejer_mass(f, orbit, [0.0, 0.3, 1.7], R, n_samples=4, seed=0)
    assert np.allclose(G[0], R, rtol=1e-12)
    for i, om in enumerate([0.3, 1.7]):
        closed = np.abs(np.exp(-2j * math.pi * om * R) - 1) ** 2 / (4 * math.pi ** 2 * om ** 2 * R)
        assert np.allclose(G[i + 1], closed, rtol=1e-9, atol=1e-14)


def test_fejer_total_mass(setup):
    sub, s, freq, f = setup
    orbit = orbit_with_length(sub, s, 200.0, freq=freq)
    step = 0.02
    omegas = np.arange(-20.0, 20.0, step)
    G = fejer_mass(f, orbit, omegas, [20.0, 40.0], n_samples=4, seed=0)
    assert np.all(G >= 0)
    total = (G * step).sum(axis=0)
    norm = f.l2_norm_sq(freq)
    assert np.all(np.abs(total - norm) < 0.1 * norm)


# --------------------------------------------------------------------------
# fits and certificates

def test_decay_fit_examples():
    R = np.geomspace(1, 1e4, 20)
    fit = decay_fit(R, R ** 0.5)
    assert abs(fit.slope - 0.5) < 1e-12 and fit.residual < 1e-12
    assert abs(decay_fit(R, np.full(R.size, 3.0)).slope) < 1e-12
    wobble = R ** 0.7 * (1 + 0.01 * np.sin(np.log(R)))
    assert abs(decay_fit(R, wobble).slope - 0.7) <= 0.01
    with pytest.raises(TooFewPoints):
        decay_fit(R[:7], R[:7])
    with pytest.raises(NonPositiveValue):
        decay_fit(R, np.zeros(R.size))
    sub = decay_fit(R, R ** 0.5, fit_range=(10, 1000))
    assert sub.R_min >= 10 and sub.R_max <= 1000 and sub.n_points >= 8


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2), st.floats(0.1, 10))
def test_decay_fit_recovers_power(p, c):
    R = np.geomspace(1, 1e5, 30)
    fit = decay_fit(R, c * R ** p)
    assert abs(fit.slope - p) < 1e-9 and abs(math.exp(fit.intercept) - c) < 1e-8 * c


def test_certificate_examples():
    R = np.geomspace(1, 1e4, 30)
    cert = varr_certificate(R, R ** 0.9, 1.0, 1.0)
    assert abs(cert.gamma - 0.2) < 1e-12 and abs(cert.C1 - 1) < 1e-9
    r = np.linspace(1e-4, cert.r_max, 50)
    assert np.all(np.diff(cert.bound(r)) > 0)
    assert cert.r_max == 0.5
    with pytest.raises(NoDecay):
        varr_certificate(R, R, 1.0, 1.0)
    with pytest.raises(ValueError):
        cert.bound(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_certificate_dominates_data(seed):
    gen = np.random.default_rng(seed)
    R = np.geomspace(1, 1e4, 40)
    sup = R ** gen.uniform(0.3, 0.95) * np.exp(gen.normal(0, 0.2, R.size))
    try:
        cert = varr_certificate(R, sup, 10.0, 1.0)
    except NoDecay:
        return
    keep = R >= 10.0
    assert np.all(sup[keep] <= cert.sup_bound(R[keep]) * (1 + 1e-12))
    assert 0 < cert.gamma <= 2


def test_select_onset_skips_transient():
    R = np.geomspace(1, 1e5, 41)
    sup = np.where(R < 300, R, 300 ** 0.5 * R ** 0.5)
    R0 = select_onset(R, sup)
    assert R0 >= 10
    fit = decay_fit(R[R >= R0], running_max(sup)[R >= R0])
    assert fit.residual <= 0.1


def test_zstar_certificate_at_sqrt2(setup):
    """Regression value recorded at build time: gamma = 1.7633 at R up to theta^12."""
    sub, s, freq, f = setup
    es = eigen_system(substitution_matrix(sub))
    orbit = orbit_with_length(sub, s, 4 * es.theta ** 12, freq=freq)
    R = es.theta ** np.linspace(2, 12, 41)
    sup = twisted_sup(f, orbit, [math.sqrt(2)], R, n_samples=64, seed=0)[0]
    cert = varr_certificate(R, sup, select_onset(R, sup), math.sqrt(2))
    assert cert.gamma > 0
    assert abs(cert.gamma - 1.7633) < 1e-3


# --------------------------------------------------------------------------
# Strichartz check

def const_table(value, t_max=50.0, dt=0.05):
    t = np.arange(0, t_max + dt / 2, dt)
    return CorrelationTable(t, np.full(t.size, value, dtype=complex), 10 * t_max, 4, "exact")


def test_strichartz_trivial():
    R = np.linspace(1, 20, 20)
    assert strichartz_sup(const_table(1.0), 1.0, [0.0, 5.0], R) == pytest.approx(40.0)
    assert strichartz_sup(const_table(0.0), 1.0, [0.0, 5.0], R) == 0.0


def test_strichartz_refinement(setup):
    sub, s, _, f = setup
    corr = orbit_correlation(f, sub, s, 400.0, 0.05, 4000.0, seed=0)
    gamma = 1.7633
    vals = []
    for k in (1, 2, 4):
        y = np.linspace(-100, 100, 10 * k + 1)
        R = np.geomspace(1, 300, 10 * k + 1)
        vals.append(strichartz_sup(corr, gamma, y, R))
    assert np.isfinite(vals).all()
    assert abs(vals[1] - vals[0]) <= 0.1 * vals[1] and abs(vals[2] - vals[1]) <= 0.1 * vals[2]


# --------------------------------------------------------------------------
# exponent budget

def test_budget_examples(zstar_es, zstar_vd):
    b = exponent_budget(zstar_es, zstar_vd, 100, 10.0, c1=0.5)
    log_theta = math.log(zstar_es.theta)
    alpha = 1 + math.log(1 - 0.5 * zstar_vd.rho ** 2) / log_theta / 100
    assert abs(b.alpha_twist - alpha) < 1e-15
    assert abs((1 - b.alpha_twist) - 2.03e-5) < 0.01e-5
    assert abs(b.Z - 8.341) < 1e-3
    assert b.gamma_final <= b.gamma_tilde and b.gamma_final > 0
    assert b.beta_tilde == pytest.approx((zstar_es.beta + 1) / 2)
    assert b.product_exponent == b.gamma_final / 2


def test_budget_monotonicity(zstar_es, zstar_vd):
    ks = [1, 3, 10, 100, 1000, 10**5]
    bs = [exponent_budget(zstar_es, zstar_vd, k, 10.0) for k in ks]
    alphas = [b.alpha_twist for b in bs]
    assert all(x < y for x, y in zip(alphas, alphas[1:]))
    gts = [b.gamma_tilde for b in bs]
    assert all(x >= y for x, y in zip(gts, gts[1:]))
    gf = [exponent_budget(zstar_es, zstar_vd, 100, U).gamma_final for U in (1.0, 5.0, 10.0, 100.0, 1e4)]
    assert all(x >= y for x, y in zip(gf, gf[1:]))
    assert all(0 < a < 1 for a in alphas)


def test_budget_errors(zstar_es, zstar_vd):
    with pytest.raises(AssumptionViolation):
        exponent_budget(zstar_es, zstar_vd, 100, 10.0, beta_tilde=zstar_es.beta)
    fib = eigen_system(substitution_matrix(parse_substitution("a->ab; b->a")))
    with pytest.raises(AssumptionViolation):
        exponent_budget(fib, vandermonde_constants(fib), 100, 10.0)


def test_certificate_type_checks():
    R = np.geomspace(1, 10, 8)
    fit = decay_fit(R, R)
    with pytest.raises(ValueError):
        HolderCertificate(1.0, 0.0, 1.0, 1.0, fit)
    with pytest.raises(ValueError):
        HolderCertificate(1.0, 0.5, -1.0, 1.0, fit)
