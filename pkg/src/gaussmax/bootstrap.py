"""Normalized sums of sub-exponential vectors and the wild multiplier bootstrap.

Each outer replication ``r`` draws its data from the stream
``(seed, DATA, r)`` and its multipliers from ``(seed, MULTIPLIER, r)``, so
experiments are reproducible and independent of the worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import optimize, special
from threadpoolctl import threadpool_limits

from . import bounds, streams
from .covariance import CovarianceModel
from .numerics import DomainError
from .sampler import EmpiricalMaxLaw, SampleConfig, quantile, sample_maxima

FAMILIES = ("centered_exponential", "rademacher_scaled", "centered_gamma", "gaussian")
HETEROGENEITY = ("none", "linear", "two_level")
SIGNED_Q_GRID = (2 / 3, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99)


# psi_1 norms of the standardized base variables


def _psi1_solve(mgf_abs) -> float:
    # smallest c with E exp(|X|/c) <= 2; the map c -> E exp(|X|/c) is decreasing
    return float(optimize.brentq(lambda c: mgf_abs(c) - 2.0, 1.0 + 1e-9, 50.0, xtol=1e-13))


def _exp_mgf_abs(c: float) -> float:
    a = 1.0 / c
    below = math.exp(a) * -math.expm1(-(1.0 + a)) / (1.0 + a)
    above = math.exp(-1.0) / (1.0 - a)
    return below + above


def _gauss_mgf_abs(c: float) -> float:
    a = 1.0 / c
    return 2.0 * math.exp(0.5 * a * a) * special.ndtr(a)


def _gamma_mgf_abs(c: float, shape: float) -> float:
    # X = (G - k)/sqrt(k), G ~ Gamma(k, 1); split at G = k and integrate each
    # side in closed form with the regularized incomplete gamma functions
    k = shape
    a = 1.0 / (c * math.sqrt(k))
    below = math.exp(a * k - k * math.log1p(a)) * special.gammainc(k, k * (1.0 + a))
    above = math.exp(-a * k - k * math.log1p(-a)) * special.gammaincc(k, k * (1.0 - a))
    return float(below + above)


@lru_cache(maxsize=None)
def psi1_norm(family: str, shape: float = 2.0) -> float:
    """Orlicz ``psi_1`` norm ``inf{c : E exp(|X|/c) <= 2}`` of the base variable."""
    if family == "rademacher_scaled":
        return 1.0 / math.log(2.0)
    if family == "centered_exponential":
        return _psi1_solve(_exp_mgf_abs)
    if family == "gaussian":
        return float(optimize.brentq(lambda c: _gauss_mgf_abs(c) - 2.0, 0.5, 50.0, xtol=1e-13))
    if family == "centered_gamma":
        lo = 1.0 / math.sqrt(shape) + 1e-6  # E exp needs 1/(c sqrt k) < 1
        return float(optimize.brentq(lambda c: _gamma_mgf_abs(c, shape) - 2.0, lo, 50.0, xtol=1e-12))
    raise DomainError(f"unsupported family {family!r}; choose from {FAMILIES}")


def _base_draw(family: str, shape: float, gen: np.random.Generator, size) -> np.ndarray:
    if family == "centered_exponential":
        return gen.standard_exponential(size) - 1.0
    if family == "rademacher_scaled":
        return 2.0 * gen.integers(0, 2, size=size).astype(float) - 1.0
    if family == "centered_gamma":
        return (gen.standard_gamma(shape, size) - shape) / math.sqrt(shape)
    if family == "gaussian":
        return gen.standard_normal(size)
    raise DomainError(f"unsupported family {family!r}; choose from {FAMILIES}")


def heterogeneity_scales(kind: str, n: int) -> np.ndarray:
    """Per-observation scale multipliers with mean square exactly one."""
    if kind == "none":
        return np.ones(n)
    if kind == "linear":
        c = 0.5 + np.arange(n) / max(n - 1, 1)
    elif kind == "two_level":
        c = np.where(np.arange(n) % 2 == 0, 0.5, 1.5)
    else:
        raise DomainError(f"unknown heterogeneity {kind!r}; choose from {HETEROGENEITY}")
    return c / math.sqrt(np.mean(c * c))


@dataclass(frozen=True, eq=False)
class DataGenModel:
    """``X_i = c_i A xi_i`` with iid standardized base vectors ``xi_i``."""

    model: CovarianceModel
    family: str = "centered_exponential"
    shape: float = 2.0
    heterogeneity: str = "none"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unsupported family {self.family!r}; choose from {FAMILIES}")
        if self.heterogeneity not in HETEROGENEITY:
            raise DomainError(f"unknown heterogeneity {self.heterogeneity!r}")
        if self.family == "centered_gamma" and not self.shape > 0:
            raise DomainError("gamma shape must be positive")

    @property
    def K_report(self) -> float:
        return psi1_norm(self.family, self.shape)

    def K_rate(self, n: int) -> float:
        """Upper bound on ``max_ij ||X_ij||_psi1``, floored at one."""
        row_l1 = np.abs(self.model.factor_rows).sum(axis=1).max() if self.model.s else 0.0
        c_max = heterogeneity_scales(self.heterogeneity, n).max()
        return max(1.0, self.K_report * float(row_l1) * float(c_max))

    def describe(self) -> dict:
        return {"model": self.model.label, "p": self.model.p, "family": self.family,
                "shape": self.shape if self.family == "centered_gamma" else None,
                "heterogeneity": self.heterogeneity, "K_report": self.K_report}


def gen_data(dgm: DataGenModel, n: int, seed: int, index: int = 0) -> np.ndarray:
    """``n x p`` data matrix for outer replication ``index``."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    gen = streams.stream(seed, streams.DATA, index)
    model = dgm.model
    if model.s == 0:
        return np.zeros((n, model.p))
    xi = _base_draw(dgm.family, dgm.shape, gen, (n, model.s))
    if model.diagonal:
        x = np.zeros((n, model.p))
        keep = model.sigmas > 0
        x[:, keep] = xi * model.sigmas[keep]
    else:
        x = xi @ model.factor_rows.T
    if dgm.heterogeneity != "none":
        x *= heterogeneity_scales(dgm.heterogeneity, n)[:, None]
    return x


def sum_stat(data) -> np.ndarray:
    """``S_n = n^{-1/2} sum_i X_i``."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise DomainError("data must be a nonempty n x p matrix")
    return data.sum(axis=0) / math.sqrt(data.shape[0])


def max_stats(s) -> tuple[float, float]:
    s = np.asarray(s, dtype=float)
    return float(s.max()), float(np.abs(s).max())


@dataclass(frozen=True)
class MultiplierSpec:
    """Bounded multipliers with mean 0 and variance 1.

    ``two_point(b)`` takes the value ``b`` with probability ``1/(1+b^2)``
    and ``-1/b`` otherwise; ``b = 1`` is the Rademacher law.
    """

    family: str = "rademacher"
    b: float = 1.0

    def __post_init__(self):
        if self.family not in ("rademacher", "two_point"):
            raise DomainError(f"unknown multiplier family {self.family!r}")
        if self.family == "rademacher" and self.b != 1.0:
            raise DomainError("rademacher multipliers have b = 1")
        if not self.b >= 1.0:
            raise DomainError(f"b must be >= 1, got {self.b!r}")

    def draw(self, gen: np.random.Generator, size) -> np.ndarray:
        if self.family == "rademacher":
            return 2.0 * gen.integers(0, 2, size=size).astype(float) - 1.0
        b = self.b
        up = gen.random(size) < 1.0 / (1.0 + b * b)
        return np.where(up, b, -1.0 / b)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Conditional law of the bootstrap maxima given one data set."""

    signed_max: np.ndarray
    unsigned_max: np.ndarray
    reps: int
    seed: int
    index: int = 0

    def quantile(self, q: float, unsigned: bool = False) -> float:
        """Order statistic ``ceil(q * reps)`` of the conditional maxima."""
        if not 0.0 < q < 1.0:
            raise DomainError(f"q must lie in (0, 1), got {q!r}")
        x = self.unsigned_max if unsigned else self.signed_max
        k = min(max(math.ceil(q * self.reps - 1e-9), 1), self.reps)
        return float(x[k - 1])

    def quantile_curve(self, q_grid: Sequence[float], unsigned: bool = False) -> np.ndarray:
        return np.array([self.quantile(q, unsigned) for q in q_grid])


def _bootstrap_draws(centered: np.ndarray, multipliers: MultiplierSpec, reps: int,
                     gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n, p = centered.shape
    scale = 1.0 / math.sqrt(n)
    block = max(1, (1 << 21) // max(n, p))
    signed = np.empty(reps)
    unsigned = np.empty(reps)
    for start in range(0, reps, block):
        m = min(block, reps - start)
        s = (multipliers.draw(gen, (m, n)) @ centered) * scale
        signed[start:start + m] = s.max(axis=1)
        unsigned[start:start + m] = np.abs(s).max(axis=1)
    return signed, unsigned


def _wild(data: np.ndarray, multipliers: MultiplierSpec, reps: int, seed: int, index: int) -> BootstrapResult:
    centered = data - data.mean(axis=0)
    gen = streams.stream(seed, streams.MULTIPLIER, index)
    signed, unsigned = _bootstrap_draws(centered, multipliers, int(reps), gen)
    signed.sort()
    unsigned.sort()
    return BootstrapResult(signed, unsigned, int(reps), int(seed), int(index))


def wild_bootstrap(data, multipliers: MultiplierSpec | None = None, reps: int = 1000, seed: int = 0,
                   index: int = 0) -> BootstrapResult:
    """``reps`` draws of ``n^{-1/2} sum_i w_i (X_i - X_bar)`` given the data."""
    if reps < 200:
        raise DomainError(f"reps must be at least 200, got {reps}")
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise DomainError("data must be a nonempty n x p matrix")
    with threadpool_limits(limits=1, user_api="blas"):
        return _wild(data, multipliers or MultiplierSpec(), reps, seed, index)


# experiments


def _outer_maxima(dgm: DataGenModel, n: int, reps: int, seed: int, workers: int | None):
    def one(r: int):
        return max_stats(sum_stat(gen_data(dgm, n, seed, r)))

    with threadpool_limits(limits=1, user_api="blas"):
        pairs = streams.ordered_map(one, range(reps), workers)
    arr = np.array(pairs, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def kolmogorov_distance(sample: np.ndarray, reference_sorted: np.ndarray) -> float:
    """``sup_t |F_sample(t) - F_ref(t)|`` evaluated exactly at all jump points.

    Between consecutive sample points the sample ECDF is constant and the
    reference ECDF is monotone, so comparing both the values and the left
    limits at each distinct sample point attains the supremum.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    ref = reference_sorted
    jumps = np.unique(x)
    f_right = np.searchsorted(x, jumps, side="right") / x.size
    f_left = np.searchsorted(x, jumps, side="left") / x.size
    g_right = np.searchsorted(ref, jumps, side="right") / ref.size
    g_left = np.searchsorted(ref, jumps, side="left") / ref.size
    return float(max(np.max(np.abs(f_right - g_right)), np.max(np.abs(f_left - g_left))))


def _rate_context(dgm: DataGenModel, n: int, law: EmpiricalMaxLaw, b: float = 1.0) -> dict:
    p = dgm.model.p
    if p < 3 or n < 2:
        return {"available": False}
    mu_star = law.mean_unsigned if law.mean_unsigned > 0 else None
    rate = bounds.clt_rate(n, p, K=dgm.K_rate(n), b=b, nu=dgm.model.sigma_max, mu_star_opt=mu_star)
    out = rate.to_dict()
    out["available"] = True
    out["K_report"] = dgm.K_report
    return out


@dataclass
class CLTExperimentResult:
    n: int
    p: int
    reps_outer: int
    q_grid: list
    t_q: list
    probabilities: list
    discrepancies: list
    std_errors: list
    sup_signed: float
    kolmogorov_unsigned: float
    rate: dict
    reference: dict
    data_model: dict
    seed: int

    @property
    def max_std_error(self) -> float:
        return max(self.std_errors)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def gaussian_reference(dgm: DataGenModel, sampler_config: SampleConfig, workers: int | None = None) -> EmpiricalMaxLaw:
    return sample_maxima(dgm.model, sampler_config, workers)


def clt_experiment(dgm: DataGenModel, n: int, reps_outer: int, sampler_config: SampleConfig | None = None,
                   seed: int = 0, q_grid: Sequence[float] = SIGNED_Q_GRID, workers: int | None = None,
                   reference: EmpiricalMaxLaw | None = None) -> CLTExperimentResult:
    """Distance between the laws of the maxima of ``S_n`` and of its Gaussian analogue.

    Signed: ``sup_q |P{max S_n <= t_q} - q|`` over ``q_grid`` where ``t_q`` are
    Monte Carlo quantiles of the Gaussian maximum. Unsigned: the exact
    Kolmogorov distance between the outer replications of ``max |S_n|`` and
    the Gaussian reference sample.
    """
    if reps_outer < 1:
        raise DomainError("reps_outer must be positive")
    if reference is None:
        reference = gaussian_reference(dgm, sampler_config or SampleConfig(), workers)
    signed, unsigned = _outer_maxima(dgm, n, reps_outer, seed, workers)
    t_q, probs, disc, ses = [], [], [], []
    for q in q_grid:
        t = quantile(reference, q)
        prob = float(np.mean(signed <= t))
        t_q.append(t)
        probs.append(prob)
        disc.append(abs(prob - q))
        ses.append(math.sqrt(q * (1 - q) / reps_outer))
    return CLTExperimentResult(
        n=int(n), p=dgm.model.p, reps_outer=int(reps_outer), q_grid=[float(q) for q in q_grid], t_q=t_q,
        probabilities=probs, discrepancies=disc, std_errors=ses, sup_signed=max(disc),
        kolmogorov_unsigned=kolmogorov_distance(unsigned, reference.samples_unsigned),
        rate=_rate_context(dgm, n, reference), reference={"n_samples": reference.n, "seed": reference.seed},
        data_model=dgm.describe(), seed=int(seed),
    )


@dataclass
class SizeResult:
    n: int
    p: int
    reps_outer: int
    reps_inner: int
    alphas: list
    rejection_rates: list
    std_errors: list
    multipliers: dict
    rate: dict
    data_model: dict
    seed: int

    def rate_for(self, alpha: float) -> float:
        return self.rejection_rates[self.alphas.index(alpha)]

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def bootstrap_size_simulation(dgm: DataGenModel, n: int, alpha: float | Sequence[float], reps_outer: int,
                              reps_inner: int, seed: int = 0, multipliers: MultiplierSpec | None = None,
                              workers: int | None = None, reference: EmpiricalMaxLaw | None = None) -> SizeResult:
    """Fraction of replications where ``max S_n`` exceeds the bootstrap ``1 - alpha`` quantile.

    Several levels share the same replications when ``alpha`` is a sequence.
    """
    alphas = [float(alpha)] if np.isscalar(alpha) else [float(a) for a in alpha]
    for a in alphas:
        if not 0.0 < a < 1.0 / 3.0:
            raise DomainError(f"alpha must lie in (0, 1/3), got {a!r}")
    multipliers = multipliers or MultiplierSpec()

    def one(r: int):
        x = gen_data(dgm, n, seed, r)
        stat = float(sum_stat(x).max())
        boot = _wild(x, multipliers, reps_inner, seed, r)
        return [stat > boot.quantile(1.0 - a) for a in alphas]

    with threadpool_limits(limits=1, user_api="blas"):
        rejections = np.array(streams.ordered_map(one, range(reps_outer), workers), dtype=bool)
    rates = rejections.mean(axis=0)
    if reference is None:
        reference = gaussian_reference(dgm, SampleConfig(100_000, seed), workers)
    return SizeResult(
        n=int(n), p=dgm.model.p, reps_outer=int(reps_outer), reps_inner=int(reps_inner), alphas=alphas,
        rejection_rates=[float(r) for r in rates],
        std_errors=[math.sqrt(a * (1 - a) / reps_outer) for a in alphas],
        multipliers={"family": multipliers.family, "b": multipliers.b},
        rate=_rate_context(dgm, n, reference, multipliers.b), data_model=dgm.describe(), seed=int(seed),
    )


@dataclass(frozen=True)
class SparseCorrResult:
    statistic: float
    critical_value: float
    reject: bool
    alpha: float
    reps: int


def sparse_corr_test(X_data, Y_data, alpha: float, reps: int = 1000, seed: int = 0, index: int = 0,
                     multipliers: MultiplierSpec | None = None) -> SparseCorrResult:
    """Max-correlation test over single coordinates.

    Statistic ``max_j n^{-1} sum_i X_ij Y_i``; the critical value is the
    wild-bootstrap ``1 - alpha`` quantile of ``max_j n^{-1} sum_i w_i (X_ij Y_i - m_j)``.
    """
    x = np.asarray(X_data, dtype=float)
    y = np.asarray(Y_data, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise DomainError(f"dimension mismatch: X is {x.shape}, Y has {y.size} entries")
    if not 0.0 < alpha < 1.0 / 3.0:
        raise DomainError(f"alpha must lie in (0, 1/3), got {alpha!r}")
    n = y.size
    prod = x * y[:, None]
    stat = float(prod.mean(axis=0).max())
    # wild_bootstrap scales by n^{-1/2}; rescale its maxima to the n^{-1} scale
    if reps < 200:
        raise DomainError(f"reps must be at least 200, got {reps}")
    boot = _wild(prod, multipliers or MultiplierSpec(), reps, seed, index)
    crit = boot.quantile(1.0 - alpha) / math.sqrt(n)
    return SparseCorrResult(stat, crit, bool(stat > crit), float(alpha), int(reps))


def block_equicorrelated(p: int, block: int, rho: float) -> np.ndarray:
    """Covariance with equicorrelated diagonal blocks of size ``block``."""
    cov = np.zeros((p, p))
    for start in range(0, p, block):
        stop = min(start + block, p)
        cov[start:stop, start:stop] = rho
    np.fill_diagonal(cov, 1.0)
    return cov


@dataclass
class SparseCorrExperiment:
    rejection_rate: float
    std_error: float
    alpha: float
    reps_outer: int
    signal: float


def sparse_corr_experiment(n: int, p: int, alpha: float, reps_outer: int, reps_inner: int = 500,
                           rho: float = 0.95, block: int = 5, signal: float = 0.0, seed: int = 0,
                           workers: int | None = None) -> SparseCorrExperiment:
    """Rejection rate of :func:`sparse_corr_test` on Gaussian designs.

    ``Y = signal * X_1 + noise``; ``signal = 0`` gives the null.
    """
    factor = np.linalg.cholesky(block_equicorrelated(p, block, rho))

    def one(r: int) -> bool:
        gen = streams.stream(seed, streams.AUX, r)
        x = gen.standard_normal((n, p)) @ factor.T
        y = signal * x[:, 0] + gen.standard_normal(n)
        return sparse_corr_test(x, y, alpha, reps_inner, seed, r).reject

    with threadpool_limits(limits=1, user_api="blas"):
        rejects = np.array(streams.ordered_map(one, range(reps_outer), workers), dtype=bool)
    rate = float(rejects.mean())
    return SparseCorrExperiment(rate, math.sqrt(max(rate * (1 - rate), 1e-12) / reps_outer), float(alpha),
                                int(reps_outer), float(signal))
