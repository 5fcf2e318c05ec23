"""Monte Carlo laws of ``M = max_i Z_i`` and ``M* = max_i |Z_i|``.

Draws are split into fixed-size chunks. Chunk ``c`` always consumes the
Philox stream keyed by ``(seed, c)``, and inside a chunk the work is cut
into sub-blocks whose size depends only on the model dimensions, so the
sorted output is bit-identical for any number of worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from threadpoolctl import threadpool_limits

from . import streams
from .covariance import CovarianceModel
from .numerics import DomainError, INV_SQRT_2PI, norm_ppf_array

MIN_SAMPLES = 10_000
DEFAULT_CHUNK = 1 << 16
_BLOCK_ELEMENTS = 1 << 22
_MAX_SAMPLES = 1 << 36


class ResourceError(MemoryError):
    """Requested sample size cannot be held in memory."""


@dataclass(frozen=True)
class SampleConfig:
    n_samples: int = 1_000_000
    seed: int = 0
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < MIN_SAMPLES:
            raise DomainError(f"n_samples must be an integer >= {MIN_SAMPLES}, got {self.n_samples!r}")
        if self.n_samples > _MAX_SAMPLES:
            raise ResourceError(f"n_samples={self.n_samples} exceeds the addressable sample budget")
        if not 0 <= int(self.seed) < 1 << 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.chunk_size < 1:
            raise DomainError("chunk_size must be positive")

    def to_dict(self) -> dict:
        return {"n_samples": int(self.n_samples), "seed": int(self.seed), "chunk_size": int(self.chunk_size)}


@dataclass(frozen=True, eq=False)
class EmpiricalMaxLaw:
    """Sorted draws of the signed and unsigned maximum with summary statistics."""

    samples_signed: np.ndarray
    samples_unsigned: np.ndarray
    mean_signed: float
    mean_unsigned: float
    variance: float
    median: float
    se_mean: float
    se_mean_unsigned: float
    se_variance: float
    sigma_max: float
    p: int
    label: str = ""
    seed: int = 0

    @property
    def n(self) -> int:
        return int(self.samples_signed.size)

    def summary(self) -> dict:
        return {
            "label": self.label,
            "p": self.p,
            "n_samples": self.n,
            "seed": self.seed,
            "sigma_max": self.sigma_max,
            "mean_signed": self.mean_signed,
            "mean_unsigned": self.mean_unsigned,
            "variance": self.variance,
            "median": self.median,
            "se_mean": self.se_mean,
            "se_mean_unsigned": self.se_mean_unsigned,
            "se_variance": self.se_variance,
        }


def _half_normal_max(u: np.ndarray, k: np.ndarray) -> np.ndarray:
    # max of k iid |N(0,1)| by inversion: P(H <= x) = (2 Phi(x) - 1)^k
    gap = -np.expm1(np.log(u) / k)
    return -norm_ppf_array(0.5 * gap)


def _half_normal_min(u: np.ndarray, k: int) -> np.ndarray:
    # min of k iid |N(0,1)|: P(H > x) = (2 - 2 Phi(x))^k
    level = -np.expm1(np.log(u) / k)
    return norm_ppf_array(0.5 + 0.5 * level)


def _iid_chunk(p: int, sigma: float, rows: int, gen: np.random.Generator):
    """Exact draws of (M, M*) for ``p`` iid ``N(0, sigma^2)`` coordinates.

    Conditionally on the number ``K`` of positive coordinates, the positive
    and negative magnitudes are independent half-normal samples of sizes
    ``K`` and ``p - K``.
    """
    k = gen.binomial(p, 0.5, size=rows)
    u = 1.0 - gen.random((2, rows))  # in (0, 1]
    neg = p - k
    a = np.zeros(rows)
    b = np.zeros(rows)
    pos_mask = k > 0
    neg_mask = neg > 0
    a[pos_mask] = _half_normal_max(u[0, pos_mask], k[pos_mask])
    b[neg_mask] = _half_normal_max(u[1, neg_mask], neg[neg_mask])
    signed = a.copy()
    none_pos = ~pos_mask
    if none_pos.any():
        signed[none_pos] = -_half_normal_min(u[1, none_pos], p)
    return sigma * signed, sigma * np.maximum(a, b)


def _diag_chunk(sig: np.ndarray, has_zero: bool, rows: int, gen: np.random.Generator):
    block = max(1, _BLOCK_ELEMENTS // sig.size)
    signed = np.empty(rows)
    unsigned = np.empty(rows)
    for start in range(0, rows, block):
        m = min(block, rows - start)
        z = gen.standard_normal((m, sig.size))
        z *= sig
        signed[start:start + m] = z.max(axis=1)
        np.abs(z, out=z)
        unsigned[start:start + m] = z.max(axis=1)
    if has_zero:
        np.maximum(signed, 0.0, out=signed)
    return signed, unsigned


def _factor_chunk(a_t: np.ndarray, rows: int, gen: np.random.Generator):
    s, p = a_t.shape
    block = max(1, _BLOCK_ELEMENTS // max(s, p))
    signed = np.empty(rows)
    unsigned = np.empty(rows)
    for start in range(0, rows, block):
        m = min(block, rows - start)
        z = gen.standard_normal((m, s)) @ a_t
        signed[start:start + m] = z.max(axis=1)
        np.abs(z, out=z)
        unsigned[start:start + m] = z.max(axis=1)
    return signed, unsigned


def _chunk_kernel(model: CovarianceModel):
    if model.trivial:
        return lambda rows, gen: (np.zeros(rows), np.zeros(rows))
    if model.is_iid and model.p > 1:
        p, sigma = model.p, float(model.sigmas[0])
        return lambda rows, gen: _iid_chunk(p, sigma, rows, gen)
    if model.diagonal:
        sig = np.ascontiguousarray(model.sigmas[model.sigmas > 0])
        has_zero = sig.size < model.p
        return lambda rows, gen: _diag_chunk(sig, has_zero, rows, gen)
    a_t = np.ascontiguousarray(model.factor_rows.T)
    return lambda rows, gen: _factor_chunk(a_t, rows, gen)


def sample_maxima(model: CovarianceModel, config: SampleConfig, workers: int | None = None) -> EmpiricalMaxLaw:
    """Sample ``config.n_samples`` draws of ``(M, M*)`` for ``Z = A g``.

    ``workers`` only affects wall time. Models with iid coordinates use an
    exact order-statistics construction instead of drawing all ``p``
    coordinates.
    """
    n = int(config.n_samples)
    kernel = _chunk_kernel(model)
    n_chunks = -(-n // config.chunk_size)

    def run(c: int):
        rows = min(config.chunk_size, n - c * config.chunk_size)
        return kernel(rows, streams.stream(config.seed, streams.SAMPLER, c))

    try:
        signed = np.empty(n)
        unsigned = np.empty(n)
        with threadpool_limits(limits=1, user_api="blas"):
            parts = streams.ordered_map(run, range(n_chunks), workers)
    except MemoryError as exc:
        raise ResourceError(f"cannot allocate {n} samples for p={model.p}") from exc
    offset = 0
    for s_part, u_part in parts:
        signed[offset:offset + s_part.size] = s_part
        unsigned[offset:offset + u_part.size] = u_part
        offset += s_part.size
    return _make_law(signed, unsigned, model.sigma_max, model.p, model.label, config.seed)


def _make_law(signed: np.ndarray, unsigned: np.ndarray, sigma_max: float, p: int, label: str,
              seed: int) -> EmpiricalMaxLaw:
    n = signed.size
    mean = float(signed.mean())
    centered = signed - mean
    var = float(np.dot(centered, centered) / (n - 1))
    m4 = float(np.mean(centered**4))
    mean_u = float(unsigned.mean())
    var_u = float(unsigned.var(ddof=1))
    signed.sort()
    unsigned.sort()
    signed.setflags(write=False)
    unsigned.setflags(write=False)
    median = float(signed[math.ceil(n / 2) - 1])
    return EmpiricalMaxLaw(
        samples_signed=signed,
        samples_unsigned=unsigned,
        mean_signed=mean,
        mean_unsigned=mean_u,
        variance=var,
        median=median,
        se_mean=math.sqrt(var / n),
        se_mean_unsigned=math.sqrt(var_u / n),
        se_variance=math.sqrt(max(m4 - var * var, 0.0) / n),
        sigma_max=float(sigma_max),
        p=int(p),
        label=label,
        seed=int(seed),
    )


def law_from_samples(signed, unsigned, sigma_max: float, p: int, label: str = "") -> EmpiricalMaxLaw:
    """Wrap externally produced draws (e.g. bootstrap replicates) as a law."""
    signed = np.array(signed, dtype=float)
    unsigned = np.array(unsigned, dtype=float)
    if signed.size < 2 or signed.shape != unsigned.shape:
        raise DomainError("need matching signed/unsigned arrays with at least two draws")
    return _make_law(signed, unsigned, sigma_max, p, label, 0)


def _samples(law: EmpiricalMaxLaw, unsigned: bool) -> np.ndarray:
    return law.samples_unsigned if unsigned else law.samples_signed


def ecdf(law: EmpiricalMaxLaw, t, unsigned: bool = False):
    """Right-continuous empirical CDF ``#{M_i <= t} / N``; vectorized in ``t``."""
    x = _samples(law, unsigned)
    out = np.searchsorted(x, np.asarray(t, dtype=float), side="right") / x.size
    return float(out) if np.ndim(out) == 0 else out


def _order_index(q: float, n: int) -> int:
    target = q * n
    nearest = round(target)
    k = nearest if abs(target - nearest) < 1e-9 * max(1.0, target) else math.ceil(target)
    return min(max(k, 1), n)


def quantile(law: EmpiricalMaxLaw, q: float, unsigned: bool = False) -> float:
    """Order statistic ``X_(ceil(qN))``."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q!r}")
    x = _samples(law, unsigned)
    return float(x[_order_index(q, x.size) - 1])


def window_prob(law: EmpiricalMaxLaw, t: float, delta: float, unsigned: bool = False) -> tuple[float, float]:
    """``P{t <= M <= t + delta}`` with its binomial standard error."""
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta!r}")
    x = _samples(law, unsigned)
    hits = np.searchsorted(x, t + delta, side="right") - np.searchsorted(x, t, side="left")
    prob = hits / x.size
    return float(prob), math.sqrt(prob * (1.0 - prob) / x.size)


def default_delta(law: EmpiricalMaxLaw, unsigned: bool = False) -> float:
    """Window width ``max(0.02 sigma_max, central quantile spacing at N^(-1/3))``."""
    h = law.n ** (-1.0 / 3.0)
    spacing = quantile(law, 0.5 + h / 2, unsigned) - quantile(law, 0.5 - h / 2, unsigned)
    return max(0.02 * law.sigma_max, spacing)


def density_estimate(law: EmpiricalMaxLaw, t: float, delta: float | None = None,
                     unsigned: bool = False) -> tuple[float, float]:
    """Forward-window density estimate ``P{t <= M <= t+delta} / delta``."""
    if delta is None:
        delta = default_delta(law, unsigned)
    prob, se = window_prob(law, t, delta, unsigned)
    return prob / delta, se / delta


def empirical_G(law: EmpiricalMaxLaw, t_grid, unsigned: bool = False) -> np.ndarray:
    """``Phi^{-1}`` of the ECDF, clipped to ``[1/N, 1 - 1/N]`` first."""
    n = law.n
    f = np.clip(np.atleast_1d(ecdf(law, np.asarray(t_grid, dtype=float), unsigned)), 1.0 / n, 1.0 - 1.0 / n)
    return norm_ppf_array(f)


def iid_exact_density(p: int, s: float, t):
    """Density of the maximum of ``p`` iid ``N(0, s^2)`` variables.

    Evaluated as ``exp(log p - log s + log phi + (p-1) log Phi)`` so that
    large ``p`` does not underflow.
    """
    if int(p) != p or p < 1:
        raise DomainError(f"p must be a positive integer, got {p!r}")
    s = float(s)
    if not s > 0 or not math.isfinite(s):
        raise DomainError(f"s must be positive, got {s!r}")
    x = np.asarray(t, dtype=float) / s
    log_f = math.log(p) - math.log(s) + math.log(INV_SQRT_2PI) - 0.5 * x * x
    if p > 1:
        log_f = log_f + (p - 1) * special.log_ndtr(x)
    out = np.exp(log_f)
    return float(out) if np.ndim(out) == 0 else out


def iid_exact_cdf(p: int, s: float, t):
    x = np.asarray(t, dtype=float) / float(s)
    out = np.exp(p * special.log_ndtr(x))
    return float(out) if np.ndim(out) == 0 else out


def sup_density(law: EmpiricalMaxLaw, k: int | None = None, unsigned: bool = False) -> float:
    """Largest k-nearest-neighbour density estimate ``k / (N * spacing_k)``.

    Spacings of ``k`` consecutive order statistics adapt to the local scale,
    which matters for laws with a narrow spike next to a wide bulk. The
    default ``k = N^(5/7)`` keeps the upward bias of taking a maximum over
    noisy estimates at a few percent for ``N = 10^6``.
    """
    x = _samples(law, unsigned)
    n = x.size
    if k is None:
        k = max(50, int(round(n ** (5.0 / 7.0))))
    k = min(k, n - 1)
    spacing = x[k:] - x[:-k]
    spacing = spacing[spacing > 0]
    if spacing.size == 0:
        return math.inf
    return float(k / (n * spacing.min()))
