import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate, stats

from gaussmax import bootstrap as bs
from gaussmax import streams
from gaussmax.covariance import CovarianceSpec, build
from gaussmax.numerics import DomainError
from gaussmax.sampler import SampleConfig, sample_maxima

GOLDEN = (1 + math.sqrt(5)) / 2


def _dgm(kind="identity", family="centered_exponential", **params):
    params.setdefault("p", 3)
    return bs.DataGenModel(build(CovarianceSpec(kind, params)), family)


@pytest.mark.parametrize("family, expected", [
    ("rademacher_scaled", 1.0 / math.log(2.0)),
    ("centered_exponential", 1.531346837854358),
    ("gaussian", 1.372495),
    ("centered_gamma", 1.449333),
])
def test_psi1_norms(family, expected):
    assert bs.psi1_norm(family) == pytest.approx(expected, rel=1e-5)


@pytest.mark.parametrize("family, log_density, support", [
    ("centered_exponential", lambda x: -(x + 1), (-1.0, math.inf)),
    ("gaussian", lambda x: -x * x / 2 - 0.5 * math.log(2 * math.pi), (-math.inf, math.inf)),
    ("centered_gamma", lambda x: stats.gamma.logpdf(2 + math.sqrt(2) * x, 2) + 0.5 * math.log(2),
     (-math.sqrt(2), math.inf)),
])
def test_psi1_by_quadrature(family, log_density, support):
    c = bs.psi1_norm(family)
    lo, hi = support

    def f(x):
        return math.exp(abs(x) / c + log_density(x))

    val = integrate.quad(f, lo, 0, limit=200)[0] + integrate.quad(f, 0, hi, limit=200)[0]
    assert val == pytest.approx(2.0, rel=1e-7)


def test_gamma_shape_one_is_exponential():
    assert bs.psi1_norm("centered_gamma", 1.0) == pytest.approx(bs.psi1_norm("centered_exponential"), rel=1e-10)


@pytest.mark.parametrize("family", bs.FAMILIES)
def test_generated_data_moments(family):
    dgm = _dgm("spiked_diag", family, p=3, delta=0.25)
    x = bs.gen_data(dgm, 1_000_000, seed=2)
    se = x.std(axis=0) / math.sqrt(x.shape[0])
    assert np.all(np.abs(x.mean(axis=0)) <= 3 * se)
    second = (x * x).mean(axis=0)
    se2 = (x * x).std(axis=0) / math.sqrt(x.shape[0])
    assert np.all(np.abs(second - dgm.model.sigmas**2) <= 3 * se2)


def test_rademacher_entries():
    dgm = _dgm("dense", "rademacher_scaled", matrix=np.diag([1.0, 4.0, 0.25]).tolist())
    x = bs.gen_data(dgm, 1000, seed=1)
    for j, s in enumerate([1.0, 2.0, 0.5]):
        assert set(np.unique(np.abs(x[:, j]))) == {s}


def test_sample_covariance_dense():
    dgm = bs.DataGenModel(build(CovarianceSpec("equicorrelated", {"p": 4, "rho": 0.6})), "centered_exponential")
    x = bs.gen_data(dgm, 1_000_000, seed=4)
    cov = x.T @ x / x.shape[0]
    prods = x[:, :, None] * x[:, None, :]
    se = prods.std(axis=0) / math.sqrt(x.shape[0])
    assert np.all(np.abs(cov - dgm.model.covariance()) <= 3 * se)


def test_heterogeneity_mean_square():
    for kind in bs.HETEROGENEITY:
        c = bs.heterogeneity_scales(kind, 101)
        assert np.mean(c * c) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        bs.heterogeneity_scales("wild", 5)


def test_sum_and_max_stats():
    assert_array_equal(bs.sum_stat(np.zeros((5, 3))), 0.0)
    row = np.array([[1.0, -3.0, 2.0]])
    assert_array_equal(bs.sum_stat(row), row[0])
    gen = np.random.default_rng(0)
    s = gen.standard_normal(10)
    perm = gen.permutation(10)
    assert bs.max_stats(s) == bs.max_stats(s[perm])
    assert bs.max_stats(np.array([1.0, -3.0, 2.0])) == (2.0, 3.0)
    with pytest.raises(DomainError):
        bs.sum_stat(np.zeros((0, 3)))


@pytest.mark.parametrize("spec", [bs.MultiplierSpec(), bs.MultiplierSpec("two_point", GOLDEN),
                                  bs.MultiplierSpec("two_point", 3.0)])
def test_multiplier_contract(spec):
    w = spec.draw(streams.stream(1, streams.AUX, 0), 2_000_000)
    se = w.std() / math.sqrt(w.size)
    assert abs(w.mean()) <= 3 * se
    assert abs((w * w).mean() - 1.0) <= 3 * (w * w).std() / math.sqrt(w.size)
    assert np.abs(w).max() <= spec.b
    if spec.b == GOLDEN:
        # Mammen's law matches the third moment as well
        assert abs((w**3).mean() - 1.0) <= 3 * (w**3).std() / math.sqrt(w.size)


def test_multiplier_validation():
    with pytest.raises(DomainError):
        bs.MultiplierSpec("rademacher", 2.0)
    with pytest.raises(DomainError):
        bs.MultiplierSpec("two_point", 0.5)
    with pytest.raises(DomainError):
        bs.MultiplierSpec("gaussian")


def test_bootstrap_degenerate_duplicate_rows():
    # identical rows center to zero, so every bootstrap sum vanishes
    x = np.tile([[1.0, -2.0, 0.5]], (50, 1))
    res = bs.wild_bootstrap(x, reps=300, seed=1)
    assert_array_equal(res.signed_max, 0.0)


def test_bootstrap_rank_one_structure():
    # rows a_i * v: the bootstrap vector is (n^{-1/2} sum w_i (a_i - a_bar)) v
    gen = np.random.default_rng(3)
    a = gen.standard_normal(40)
    v = np.array([1.0, -2.0, 0.5])
    x = a[:, None] * v
    res = bs.wild_bootstrap(x, reps=400, seed=2)
    w = bs.MultiplierSpec().draw(streams.stream(2, streams.MULTIPLIER, 0), (400, 40))
    scalar = w @ (a - a.mean()) / math.sqrt(40)
    expected = np.sort(np.max(scalar[:, None] * v, axis=1))
    assert_allclose(res.signed_max, expected, rtol=1e-12, atol=1e-12)


def test_bootstrap_sign_symmetry():
    # symmetric multipliers: the law of max S* equals that of max(-S*)
    x = bs.gen_data(_dgm("identity", "gaussian", p=5), 200, seed=3)
    centered = x - x.mean(axis=0)
    w = bs.MultiplierSpec().draw(streams.stream(9, streams.AUX, 0), (20_000, 200))
    s = w @ centered / math.sqrt(200)
    ks = stats.ks_2samp(s.max(axis=1), (-s).max(axis=1))
    assert ks.pvalue > 1e-3
    res = bs.wild_bootstrap(x, reps=20_000, seed=4)
    ks = stats.ks_2samp(res.signed_max, (-s).max(axis=1))
    assert ks.pvalue > 1e-3


def test_quantile_curve_monotone():
    x = bs.gen_data(_dgm(), 100, seed=5)
    res = bs.wild_bootstrap(x, reps=500, seed=5)
    curve = res.quantile_curve(np.linspace(0.01, 0.99, 50))
    assert np.all(np.diff(curve) >= 0)
    assert res.quantile(0.5) == res.signed_max[249]


def test_wild_bootstrap_validation():
    with pytest.raises(DomainError):
        bs.wild_bootstrap(np.zeros((5, 2)), reps=10)
    with pytest.raises(DomainError):
        bs.wild_bootstrap(np.zeros(5), reps=300)


def test_kolmogorov_distance_exact():
    ref = np.array([0.0, 1.0, 2.0, 3.0])
    assert bs.kolmogorov_distance(np.array([0.5, 2.5]), ref) == pytest.approx(0.25)
    assert bs.kolmogorov_distance(ref, ref) == 0.0
    assert bs.kolmogorov_distance(np.array([10.0]), ref) == 1.0


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=40), st.lists(st.floats(-5, 5), min_size=1, max_size=40))
def test_kolmogorov_matches_scipy(a, b):
    ours = bs.kolmogorov_distance(np.array(a), np.sort(np.array(b)))
    grid = np.union1d(a, b)
    fa = np.searchsorted(np.sort(a), grid, side="right") / len(a)
    fb = np.searchsorted(np.sort(b), grid, side="right") / len(b)
    assert ours == pytest.approx(np.max(np.abs(fa - fb)), abs=1e-12)


def test_sparse_corr_zero_response():
    x = np.random.default_rng(0).standard_normal((100, 8))
    res = bs.sparse_corr_test(x, np.zeros(100), 0.1, reps=300)
    assert res.statistic == 0.0 and res.critical_value == 0.0 and not res.reject


def test_sparse_corr_dimension_mismatch():
    with pytest.raises(DomainError, match="dimension mismatch"):
        bs.sparse_corr_test(np.zeros((10, 3)), np.zeros(9), 0.1, reps=300)
    with pytest.raises(DomainError):
        bs.sparse_corr_test(np.zeros((10, 3)), np.zeros(10), 0.4, reps=300)


@pytest.mark.slow
def test_sparse_corr_size_and_power():
    null = bs.sparse_corr_experiment(200, 30, 0.1, 300, 300, seed=3)
    power = bs.sparse_corr_experiment(200, 30, 0.1, 300, 300, signal=0.5, seed=3)
    assert null.rejection_rate <= 0.15 + 3 * null.std_error
    assert power.rejection_rate > null.rejection_rate


def test_size_simulation_deterministic_across_workers():
    dgm = _dgm("spiked_diag", p=10, delta=1e-4)
    ref = sample_maxima(dgm.model, SampleConfig(20_000, 1))
    a = bs.bootstrap_size_simulation(dgm, 50, [0.1, 0.25], 40, 200, seed=8, workers=1, reference=ref)
    b = bs.bootstrap_size_simulation(dgm, 50, [0.1, 0.25], 40, 200, seed=8, workers=4, reference=ref)
    assert a.to_dict() == b.to_dict()
    assert a.rate["available"] and a.rate["R"] > 0
    with pytest.raises(DomainError):
        bs.bootstrap_size_simulation(dgm, 50, 0.4, 10, 200)


def test_gaussian_data_size():
    dgm = _dgm("identity", "gaussian", p=20)
    res = bs.bootstrap_size_simulation(dgm, 100, 0.1, 600, 300, seed=2,
                                       reference=sample_maxima(dgm.model, SampleConfig(20_000, 1)))
    assert abs(res.rejection_rates[0] - 0.1) <= 3 * res.std_errors[0] + 0.01


@pytest.mark.slow
def test_clt_discrepancy_shrinks_with_n():
    # skewed summands: the leading error term decays like n^{-1/2}
    dgm = _dgm("spiked_diag", p=50, delta=1e-4)
    ref = sample_maxima(dgm.model, SampleConfig(1_000_000, 6))
    sups = [bs.clt_experiment(dgm, n, 2000, seed=5, reference=ref).sup_signed for n in (100, 1600)]
    assert sups[1] < sups[0]
    assert sups[1] < 0.06


def test_clt_experiment_gaussian_data():
    dgm = _dgm("identity", "gaussian", p=10)
    ref = sample_maxima(dgm.model, SampleConfig(200_000, 3))
    res = bs.clt_experiment(dgm, 50, 2000, seed=4, reference=ref)
    bound = max(math.sqrt(q * (1 - q) * (1 / 2000 + 1 / ref.n)) for q in res.q_grid)
    assert res.sup_signed <= 3 * bound
    assert res.kolmogorov_unsigned < 0.05
    assert res.rate["available"]


def test_data_model_validation():
    model = build(CovarianceSpec("identity", {"p": 3}))
    with pytest.raises(DomainError):
        bs.DataGenModel(model, "cauchy")
    with pytest.raises(DomainError):
        bs.DataGenModel(model, heterogeneity="odd")
    assert bs.DataGenModel(model).K_rate(10) >= 1.0
