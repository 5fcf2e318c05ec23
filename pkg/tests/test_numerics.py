import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from gaussmax.numerics import (
    DEFAULT_CONTEXT,
    DomainError,
    coth,
    gaussian_tail_integral,
    norm_cdf_array,
    norm_pdf_array,
    norm_ppf_array,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
    std_normal_sf,
)

# reference values from 30-digit mpmath evaluations


@pytest.mark.parametrize("x, expected", [
    (0.0, 0.398942280401432678),
    (1.0, 0.241970724519143350),
    (3.03485, 0.00398947436659242),
])
def test_pdf_values(x, expected):
    assert std_normal_pdf(x) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("x, expected", [
    (0.0, 0.5),
    (0.674490, 0.750000079381826299),
    (1.0, 0.841344746068542949),
    (-8.0, 6.22096057427178e-16),
    (-38.0, 2.8849794386e-316),
])
def test_cdf_values(x, expected):
    assert std_normal_cdf(x) == pytest.approx(expected, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("q, expected", [
    (0.5, 0.0),
    (2.0 / 3.0, 0.430727299295457490),
    (0.75, 0.674489750196081743),
    (1e-10, -6.361340902404056),
])
def test_quantile_values(q, expected):
    assert std_normal_quantile(q) == pytest.approx(expected, abs=1e-12)


def test_coth_values():
    assert coth(0.5) == pytest.approx(2.16395341373865285, rel=1e-14)
    assert coth(0.11378) == pytest.approx(8.82678481598846, rel=1e-12)
    assert coth(1e-6) == pytest.approx(1e6 + 3.333333333e-7, rel=1e-15)
    assert coth(-0.5) == -coth(0.5)


def test_coth_rejects_zero():
    with pytest.raises(DomainError):
        coth(0.0)


def test_tail_integral_values():
    assert gaussian_tail_integral(0.0) == pytest.approx(0.398942280401432678, abs=1e-15)
    assert gaussian_tail_integral(0.674490) == pytest.approx(0.149154072684116849, abs=1e-12)


def test_tail_integral_matches_quadrature():
    for a in (0.0, 0.3, 1.0, 2.5, 5.0):
        quad, _ = integrate.quad(lambda u: std_normal_sf(u), a, np.inf, epsabs=1e-14)
        assert gaussian_tail_integral(a) == pytest.approx(quad, abs=1e-12)


def test_tail_integral_decreases_to_zero():
    vals = [gaussian_tail_integral(a) for a in np.linspace(0, 30, 301)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-190


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_inputs_rejected(bad):
    with pytest.raises(DomainError):
        std_normal_pdf(bad)
    with pytest.raises(DomainError):
        std_normal_cdf(bad)


@pytest.mark.parametrize("q", [0.0, 1.0, -0.1, 1.5, math.nan])
def test_quantile_domain(q):
    with pytest.raises(DomainError):
        std_normal_quantile(q)


def test_tail_integral_domain():
    with pytest.raises(DomainError):
        gaussian_tail_integral(-0.1)


@given(st.floats(min_value=1e-10, max_value=1 - 1e-10))
def test_cdf_inverts_quantile(q):
    assert std_normal_cdf(std_normal_quantile(q)) == pytest.approx(q, abs=DEFAULT_CONTEXT.abs_tol, rel=1e-10)


@given(st.floats(min_value=-40, max_value=40))
def test_pdf_symmetric(x):
    assert std_normal_pdf(x) == std_normal_pdf(-x)


@given(st.lists(st.floats(min_value=-40, max_value=40), min_size=2, max_size=50))
def test_cdf_monotone(xs):
    xs = sorted(xs)
    vals = [std_normal_cdf(x) for x in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@given(st.floats(min_value=-37, max_value=8))
def test_scalar_and_array_routes_agree(x):
    assert std_normal_cdf(x) == pytest.approx(float(norm_cdf_array(x)), rel=1e-12, abs=1e-300)
    assert std_normal_pdf(x) == pytest.approx(float(norm_pdf_array(x)), rel=1e-13, abs=1e-300)


def test_array_quantile_matches_scalar():
    q = np.linspace(0.001, 0.999, 97)
    assert_allclose(norm_ppf_array(q), [std_normal_quantile(v) for v in q], atol=1e-12)
