import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, optimize

from gaussmax import bounds
from gaussmax.covariance import weak_decay_sigmas
from gaussmax.numerics import DomainError

SIGMA_EXAMPLE = [2.0, 1.5, 1.0, 0.5] + [0.1] * 6


def test_scale_free_values():
    assert bounds.scale_free_envelope(2.0, 100) == pytest.approx(9.21034037197618, rel=1e-14)
    assert bounds.scale_free_envelope(4.0 * math.log(3), 3) == pytest.approx(1.0, rel=1e-14)
    vals = [bounds.scale_free_envelope(t, 10) for t in np.logspace(-1, 3, 50)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_scale_free_domain():
    with pytest.raises(DomainError):
        bounds.scale_free_envelope(0.0, 10)
    with pytest.raises(DomainError):
        bounds.scale_free_envelope(1.0, 2)


def test_effective_dimension():
    threshold = 3.0 / math.sqrt(2 * math.log(10) + 2 * math.log(math.log(10)))
    assert threshold == pytest.approx(1.19777, abs=1e-5)
    assert bounds.effective_dimension(SIGMA_EXAMPLE, 3.0, 10) == 2
    assert bounds.effective_dimension([5.0] * 7, 1.0, 7) == 7
    assert bounds.effective_dimension([0.001] * 7, 10.0, 7) == 2


def test_refined_envelope():
    assert bounds.refined_envelope([1.0, 1.0] + [1e-9] * 998, 1.0, 1000) == pytest.approx(3.77258872223978, rel=1e-13)
    assert bounds.refined_envelope(SIGMA_EXAMPLE, 3.0, 10) == pytest.approx(1.25752957407993, rel=1e-13)
    # when every coordinate counts the min picks the scale-free term
    assert bounds.refined_envelope([1.0] * 10, 0.5, 10) == bounds.scale_free_envelope(0.5, 10)


def test_master_bound_values():
    assert bounds.master_bound([1, 1, 1], 1.0, 0.5) == pytest.approx(6.0)
    assert bounds.master_bound([1, 1, 1], 1.0, 2.0) == pytest.approx(1.47591217355743, rel=1e-13)
    assert bounds.master_bound([0, 0, 0], 1.0, 2.0) == pytest.approx(0.75)


def test_master_optimized():
    value, u = bounds.master_bound_optimized([1, 1, 1], 1.0, 3)
    assert value <= bounds.scale_free_envelope(1.0, 3)
    assert value == pytest.approx(bounds.master_bound([1, 1, 1], 1.0, u))
    # tiny coordinates contribute phi(1e6)/1e-6 = 0; u = 1 gives (1 + 1)/1
    value, u = bounds.master_bound_optimized([1.0, 1e-6, 1e-6], 1.0, 3)
    assert value == pytest.approx(2.0, abs=1e-12)
    assert value <= 3.7725887222397812


def test_master_optimized_large_t():
    t, p = 40.0, 50
    value, u = bounds.master_bound_optimized([1.0] * p, t, p)
    u0 = t / math.sqrt(2 * math.log(p))
    assert value <= (u0 + t) / u0**2 + 1e-12


@given(st.lists(st.floats(min_value=1e-4, max_value=10.0), min_size=3, max_size=40),
       st.floats(min_value=0.05, max_value=20.0))
def test_optimized_is_grid_minimum(sigmas, t):
    p = len(sigmas)
    value, u = bounds.master_bound_optimized(sigmas, t, p)
    candidates = set(sigmas) | {t / math.sqrt(2 * math.log(p))}
    brute = min(bounds.master_bound(sigmas, t, c) for c in candidates)
    assert value <= brute * (1 + 1e-12)
    assert value <= bounds.scale_free_envelope(t, p) * (1 + 1e-12)


def test_weak_decay_bound():
    v = bounds.weak_decay_bound([1, 1, 1], 1.0)
    assert np.isfinite(v)
    assert v <= bounds.master_bound_optimized([1, 1, 1], 1.0, 3)[0] + bounds.C_WEAK * math.sqrt(math.log(3))
    vals = [bounds.weak_decay_bound(weak_decay_sigmas(p, 2.0), 1.0) for p in (100, 1000, 10_000)]
    assert max(vals) / min(vals) < 1.05
    grow = [bounds.weak_decay_bound(weak_decay_sigmas(p, 1.0), 1.0) for p in (100, 10_000)]
    assert grow[1] > grow[0]


def test_small_ball_constants():
    c = bounds.small_ball_constants()
    assert c.w == pytest.approx(0.674489750196082, abs=1e-12)
    assert c.C1 == pytest.approx(0.538164958101235, abs=1e-12)
    assert c.C0 == pytest.approx(1.44227250330113, abs=1e-12)
    assert 0.67 < c.w < 0.68 and c.C0 > 1 and c.C >= c.C0


def test_small_ball_c0_quadrature_route():
    c = bounds.small_ball_constants()
    tail, _ = integrate.quad(lambda u: 0.5 * math.erfc(u / math.sqrt(2)), c.w, np.inf, epsabs=1e-14)
    assert c.C0 == pytest.approx(1 + 2 * tail / c.w, abs=1e-10)


def test_window_signed():
    wb = bounds.window_bound_signed(3, 1.0, 1.0, 0.1)
    assert wb.value == pytest.approx(1.76138673351908, rel=1e-13)
    assert wb.clipped == 1.0
    p = 100
    mu = math.sqrt(2 * math.log(p))
    wb = bounds.window_bound_signed(p, mu, 1.0, 0.01)
    assert wb.value == pytest.approx(p ** -0.25 + 0.08 * math.log(p) / mu)
    floor = bounds.window_bound_signed(p, mu, 1.0, 1e-300)
    assert not floor.eps_admissible
    assert floor.value == pytest.approx(math.exp(-mu**2 / 8))


def test_window_unsigned():
    wb = bounds.window_bound_unsigned(3, 1.0, 0.01)
    assert wb.r_star == pytest.approx(0.222918538934725, rel=1e-12)
    assert wb.value == pytest.approx(0.643018558363231, rel=1e-12)
    small = bounds.window_bound_unsigned(3, 1.0, 1e-6).value
    assert small / bounds.window_bound_unsigned(3, 1.0, 4e-6).value == pytest.approx(0.5, rel=1e-9)
    a = bounds.window_bound_unsigned(10, 1.0, 1e-3).value
    b = bounds.window_bound_unsigned(10, 2.0, 1e-3).value
    assert b / a == pytest.approx(1 / math.sqrt(2), rel=1e-9)
    with pytest.raises(DomainError):
        bounds.window_bound_unsigned(3, 1.0, 1.0)


def test_variance_lower_bound():
    vb = bounds.variance_lower_bound(1.0, 3)
    assert vb.exact == pytest.approx(0.00431156904293756, rel=1e-10)
    assert vb.simplified == pytest.approx(0.00368237977640099, rel=1e-10)
    B = 4 * math.log(3)
    assert vb.exact >= 1 / (13 * B * B) == pytest.approx(0.00398334350812607, rel=1e-10)
    doubled = bounds.variance_lower_bound(2.0, 3)
    assert doubled.exact == pytest.approx(4 * vb.exact)
    assert doubled.simplified == pytest.approx(4 * vb.simplified)


@given(st.floats(min_value=0.01, max_value=100.0), st.integers(min_value=3, max_value=10**8))
def test_variance_ordering(mu, p):
    vb = bounds.variance_lower_bound(mu, p)
    B = 4 * math.log(p)
    assert vb.exact >= mu * mu / (13 * B * B) * (1 - 1e-12)
    assert vb.exact >= vb.simplified


def test_bathtub_closed_form():
    sol = bounds.bathtub_minimizer(1.0, 1.0, 1.0)
    assert sol.a == pytest.approx(0.581976706869326, rel=1e-13)
    assert sol.b == pytest.approx(1.58197670686933, rel=1e-13)
    assert sol.second_moment == pytest.approx(1.08197670686933, rel=1e-13)
    assert sol.variance == pytest.approx(0.0819767068693264, rel=1e-11)


@given(st.floats(min_value=0.05, max_value=50), st.floats(min_value=0.01, max_value=1.0),
       st.floats(min_value=0.01, max_value=50))
def test_bathtub_identities(B, q, A):
    sol = bounds.bathtub_minimizer(B, q, A)
    assert B * math.log(sol.b / sol.a) == pytest.approx(q, rel=1e-9)
    assert B * (sol.b - sol.a) == pytest.approx(A, rel=1e-9)
    assert sol.variance >= -1e-12 * A * A
    # second moment by direct integration of (B/t) t^2 on [a, b]
    assert sol.second_moment == pytest.approx(0.5 * B * (sol.b**2 - sol.a**2), rel=1e-9)


def test_extremal_envelope():
    assert bounds.extremal_envelope(0.3, 1.0, 1.0, 10, 0.0) == pytest.approx(0.3)
    assert bounds.extremal_envelope(0.3, 1.0, 1.0, 10, 2.0) == pytest.approx(0.3 * 0.135335283236613)
    env = bounds.extremal_envelope(None, 2.0, 1.0, 10, 1.0)
    assert env == pytest.approx(4 * math.log(10) / 2.0 * math.exp(-0.5))


def test_clt_rate_examples():
    r = bounds.clt_rate(10**6, 100)
    assert r.R == pytest.approx(0.594000255460446, rel=1e-12)
    assert r.assumption_ok
    assert r.assumption_lhs == pytest.approx(409.596955917636, rel=1e-12)
    r = bounds.clt_rate(10**4, 100)
    assert r.R == pytest.approx(1.27973475625178, rel=1e-12)
    assert not r.assumption_ok
    assert bounds.clt_rate(10**4, 100, nu=8.0).R == pytest.approx(r.R / 4)


@given(st.integers(min_value=2, max_value=10**9), st.integers(min_value=3, max_value=10**6),
       st.floats(min_value=1, max_value=10), st.floats(min_value=1, max_value=10))
def test_clt_rate_properties(n, p, K, b):
    r = bounds.clt_rate(n, p, K, b, mu_star_opt=1.5)
    assert min(r.R, r.R_star, r.Delta1, r.Delta2) > 0
    lhs = b * K * K * math.sqrt(math.log(p)) * math.log(n) ** 2
    assert r.assumption_ok == (lhs <= math.sqrt(n))


@given(st.lists(st.floats(min_value=1e-3, max_value=5.0), min_size=3, max_size=30),
       st.floats(min_value=0.05, max_value=20.0))
def test_envelopes_finite_positive(sigmas, t):
    p = len(sigmas)
    for kind in bounds.ENVELOPE_KINDS:
        v = bounds.envelope_value(kind, sigmas, t, p)
        assert np.isfinite(v) and v > 0
    assert bounds.scale_free_envelope(t, p) == 4 * math.log(p) / t


def test_integrated_envelope_quadrature():
    sig = [1.0, 0.5, 0.1, 0.01]
    for kind in bounds.ENVELOPE_KINDS:
        direct, _ = integrate.quad(lambda s: bounds.envelope_value(kind, sig, s, 4), 0.7, 0.9, limit=200)
        assert bounds.integrated_envelope(kind, sig, 4, 0.7, 0.2) == pytest.approx(direct, rel=1e-3)


def test_provenance_present():
    for kind in (*bounds.ENVELOPE_KINDS, "master", "window_signed", "window_unsigned", "variance", "clt_rate"):
        assert bounds.PROVENANCE[kind]
    assert "proof-tracked" in bounds.PROVENANCE["weak_decay"]


def test_coth_gap_continuity():
    xs = [0.5e-3, 0.999e-3, 1.001e-3, 2e-3]
    gaps = [bounds.coth_gap(x) for x in xs]
    assert_allclose(gaps, [x * x / 3 - x**4 / 45 for x in xs], rtol=1e-8)


def test_variance_bound_minimizes_bathtub():
    # scale-free density cap B/t with mean mu: minimal variance over q is the exact bound
    B, mu = 4 * math.log(3), 1.0
    res = optimize.minimize_scalar(lambda q: bounds.bathtub_minimizer(B, q, mu).variance,
                                   bounds=(1e-6, 1.0), method="bounded")
    assert bounds.bathtub_minimizer(B, 1.0, mu).variance == pytest.approx(bounds.variance_lower_bound(mu, 3).exact,
                                                                          rel=1e-10)
    assert res.fun >= bounds.variance_lower_bound(mu, 3).exact * (1 - 1e-6)
