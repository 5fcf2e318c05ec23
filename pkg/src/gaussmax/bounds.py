"""Analytic density, window, variance and rate bounds for Gaussian maxima.

All logarithms are natural. Inequalities that are only stated up to an
unspecified constant are evaluated with the constants that fall out of their
proofs; every result carries a ``provenance`` string describing the formula
and where its constants come from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .numerics import (
    INV_SQRT_2PI,
    DomainError,
    coth,
    gaussian_tail_integral,
    std_normal_quantile,
)

C_WEAK = 1.0 + 2.0 * math.sqrt(2.0)

PROVENANCE = {
    "scale_free": "4 log(p) / t; exact constant",
    "refined_effective_dim": "4 min{(log p*(t) + 1/4)/t, log(p)/t}; exact constants",
    "master": "(u + t)/u^2 + sum_{0<sigma_i<u} phi(t/sigma_i)/sigma_i; exact constants",
    "master_optimized": "master bound minimized over u in {t/sqrt(2 log p), t/sqrt(2 log p*(t))} and all sigma_i",
    "weak_decay": "min{4 log k/t + 1/(sqrt(2 pi) u), C_w sqrt(log k)/u} + tail sum, k = #{sigma >= u} v 2; "
    "C_w = 1 + 2 sqrt(2) proof-tracked",
    "extremal_quantile": "min{f(m), 4 log(p)/m} exp(-h^2/2); exact constants",
    "window_signed": "exp(-mu^2/(8 sigma_max^2)) + 8 eps log(p)/mu; split at mu/2, proof-tracked constants",
    "window_unsigned": "C r* + 4 eps log(2p)/(r* mu*), r* = min(1, sqrt(4 eps log(2p)/(C mu*))); "
    "C = max(C0 C1, C0) from the small-ball argument",
    "small_ball": "P{M* <= r mu*} <= C r with C = max(C0 C1, C0)",
    "variance": "Var(M) >= mu^2 [(1/2B) coth(1/2B) - 1], B = 4 log p; exact",
    "variance_simplified": "sqrt(Var(M)) >= mu / (15 log p)",
    "extremal_tail": "1 - F(m + h sigma_max) <= 1 - Phi(h)",
    "clt_rate": "R = nu^(-2/3) (b^2 K^4 log^7 p / n)^(1/6); R* = mu*^(-2/5) (b^2 K^4 log^7 p / n)^(1/10); "
    "constants suppressed",
}


def _check_t(t: float) -> float:
    t = float(t)
    if not (math.isfinite(t) and t > 0):
        raise DomainError(f"t must be positive and finite, got {t!r}")
    return t


def _check_p(p: int, minimum: int = 3) -> int:
    if int(p) != p or p < minimum:
        raise DomainError(f"p must be an integer >= {minimum}, got {p!r}")
    return int(p)


def _positive_sigmas(sigmas) -> np.ndarray:
    sig = np.asarray(sigmas, dtype=float).ravel()
    if np.any(sig < 0) or not np.all(np.isfinite(sig)):
        raise DomainError("standard deviations must be finite and nonnegative")
    return sig[sig > 0]


def _tail_terms(sig: np.ndarray, t: float) -> np.ndarray:
    """``phi(t/sigma)/sigma`` for each positive sigma."""
    z = t / sig
    return INV_SQRT_2PI * np.exp(-0.5 * z * z) / sig


# density envelopes


def scale_free_envelope(t: float, p: int) -> float:
    t = _check_t(t)
    p = _check_p(p)
    return 4.0 * math.log(p) / t


def effective_dimension(sigmas, t: float, p: int) -> int:
    """Number of coordinates with ``sigma_i >= t (2 log p + 2 log log p)^(-1/2)``, floored at 2."""
    t = _check_t(t)
    p = _check_p(p)
    sig = np.asarray(sigmas, dtype=float)
    threshold = t / math.sqrt(2.0 * math.log(p) + 2.0 * math.log(math.log(p)))
    return max(int(np.count_nonzero(sig >= threshold)), 2)


def refined_envelope(sigmas, t: float, p: int) -> float:
    p_star = effective_dimension(sigmas, t, p)
    return float(4.0 * min((math.log(p_star) + 0.25) / t, math.log(p) / t))


def master_bound(sigmas, t: float, u: float) -> float:
    """Two-term density bound at threshold ``u``; zero-variance coordinates are dropped."""
    t = _check_t(t)
    u = float(u)
    if not u > 0:
        raise DomainError(f"u must be positive, got {u!r}")
    sig = _positive_sigmas(sigmas)
    small = sig[sig < u]
    return (u + t) / (u * u) + float(_tail_terms(small, t).sum())


def _master_on_grid(sig_sorted: np.ndarray, t: float, u_grid: np.ndarray) -> np.ndarray:
    prefix = np.concatenate([[0.0], np.cumsum(_tail_terms(sig_sorted, t))])
    below = np.searchsorted(sig_sorted, u_grid, side="left")
    return (u_grid + t) / u_grid**2 + prefix[below]


def master_bound_optimized(sigmas, t: float, p: int) -> tuple[float, float]:
    """Minimize :func:`master_bound` over a finite grid of thresholds.

    The grid holds ``t/sqrt(2 log p)``, ``t/sqrt(2 log p*(t))`` and every
    distinct positive ``sigma_i``. Between consecutive ``sigma`` values the
    bound decreases in ``u``, so the breakpoints cover the sum's jumps.

    Returns
    -------
    (value, u_at_min)
    """
    t = _check_t(t)
    p = _check_p(p)
    sig = np.sort(_positive_sigmas(sigmas))
    p_star = effective_dimension(sigmas, t, p)
    analytic = [t / math.sqrt(2.0 * math.log(p)), t / math.sqrt(2.0 * math.log(p_star))]
    u_grid = np.unique(np.concatenate([analytic, sig]))
    values = _master_on_grid(sig, t, u_grid)
    best = int(np.argmin(values))
    return float(values[best]), float(u_grid[best])


def weak_decay_bound(sigmas, t: float, return_u: bool = False):
    """Density bound adapted to decaying standard deviations.

    For each threshold ``u`` let ``k = max(#{sigma_i >= u}, 2)``; the bound is

        min{4 log k / t + 1/(sqrt(2 pi) u),  C_w sqrt(log k) / u}
            + sum_{sigma_i < u} phi(t/sigma_i) / sigma_i

    with ``C_w = 1 + 2 sqrt(2)``, minimized over ``u`` in the sigma values and
    ``t / sqrt(2 log k)`` for ``k = 2..p``.
    """
    t = _check_t(t)
    raw = np.asarray(sigmas, dtype=float).ravel()
    sig = np.sort(_positive_sigmas(raw))
    if sig.size == 0:
        raise DomainError("weak_decay_bound needs at least one positive standard deviation")
    p = max(raw.size, 2)
    ks = np.arange(2, p + 1, dtype=float)
    u_grid = np.unique(np.concatenate([sig, t / np.sqrt(2.0 * np.log(ks))]))

    prefix = np.concatenate([[0.0], np.cumsum(_tail_terms(sig, t))])
    below = np.searchsorted(sig, u_grid, side="left")
    k = np.maximum(sig.size - below, 2).astype(float)
    log_k = np.log(k)
    regime1 = 4.0 * log_k / t + INV_SQRT_2PI / u_grid
    regime2 = C_WEAK * np.sqrt(log_k) / u_grid
    values = np.minimum(regime1, regime2) + prefix[below]
    best = int(np.argmin(values))
    if return_u:
        return float(values[best]), float(u_grid[best])
    return float(values[best])


def extremal_envelope(f_m: float | None, m: float, sigma_max: float, p: int, h: float) -> float:
    """Density bound at ``m + h * sigma_max`` above a positive median ``m``.

    When the density at the median is unknown (``f_m=None``) only the
    scale-free value at ``m`` is used.
    """
    m = float(m)
    if not m > 0:
        raise DomainError(f"median m must be positive, got {m!r}")
    if h < 0:
        raise DomainError(f"h must be nonnegative, got {h!r}")
    cap = 4.0 * math.log(_check_p(p)) / m
    base = cap if f_m is None else min(float(f_m), cap)
    return base * math.exp(-0.5 * h * h)


ENVELOPE_KINDS = ("scale_free", "refined_effective_dim", "master_optimized", "weak_decay")


@dataclass(frozen=True)
class DensityEnvelope:
    t_grid: np.ndarray
    values: np.ndarray
    kind: str
    provenance: str = ""


def envelope_value(kind: str, sigmas, t: float, p: int) -> float:
    if kind == "scale_free":
        return scale_free_envelope(t, p)
    if kind == "refined_effective_dim":
        return refined_envelope(sigmas, t, p)
    if kind == "master_optimized":
        return master_bound_optimized(sigmas, t, p)[0]
    if kind == "weak_decay":
        return weak_decay_bound(sigmas, t)
    raise DomainError(f"unknown envelope kind {kind!r}")


def evaluate_envelope(kind: str, sigmas, t_grid: Sequence[float], p: int) -> DensityEnvelope:
    grid = np.asarray(t_grid, dtype=float)
    values = np.array([envelope_value(kind, sigmas, t, p) for t in grid])
    return DensityEnvelope(grid, values, kind, PROVENANCE[kind])


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def integrated_envelope(kind: str, sigmas, p: int, t: float, delta: float) -> float:
    """Integral of a density envelope over ``[t, t + delta]``.

    The scale-free case is exact, ``4 log p * log(1 + delta/t)``; the others
    use 32-point Gauss-Legendre on the window.
    """
    t = _check_t(t)
    if kind == "scale_free":
        return 4.0 * math.log(_check_p(p)) * math.log1p(delta / t)
    nodes = t + 0.5 * delta * (_GL_NODES + 1.0)
    vals = np.array([envelope_value(kind, sigmas, s, p) for s in nodes])
    return float(0.5 * delta * np.dot(_GL_WEIGHTS, vals))


# window bounds and small-ball constants


@dataclass(frozen=True)
class SmallBallConstants:
    w: float
    C1: float
    C0: float
    C: float


def small_ball_constants() -> SmallBallConstants:
    w = std_normal_quantile(0.75)
    c1 = math.sqrt(2.0 / math.pi) * w
    c0 = 1.0 + (2.0 / w) * gaussian_tail_integral(w)
    return SmallBallConstants(w=w, C1=c1, C0=c0, C=max(c0 * c1, c0))


@dataclass(frozen=True)
class WindowBound:
    value: float
    eps_admissible: bool
    provenance: str
    r_star: float | None = None

    @property
    def clipped(self) -> float:
        return min(self.value, 1.0)


def window_bound_signed(p: int, mu: float, sigma_max: float, eps: float) -> WindowBound:
    """Bound on ``P{t <= M <= t + eps}`` valid for every ``t``.

    The flag ``eps_admissible`` marks the regime ``eps >= sigma_max exp(-mu^2 / (8 sigma_max^2))``
    where the first term is dominated by the second.
    """
    p = _check_p(p)
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps!r}")
    if not sigma_max > 0:
        raise DomainError(f"sigma_max must be positive, got {sigma_max!r}")
    floor = math.exp(-(mu * mu) / (8.0 * sigma_max * sigma_max))
    value = floor + 8.0 * eps * math.log(p) / mu
    return WindowBound(value, eps >= sigma_max * floor, PROVENANCE["window_signed"])


def window_bound_unsigned(p: int, mu_star: float, eps: float) -> WindowBound:
    p = _check_p(p, minimum=2)
    if not mu_star > 0:
        raise DomainError(f"mu_star must be positive, got {mu_star!r}")
    log2p = math.log(2 * p)
    if not 0 < eps < mu_star / log2p:
        raise DomainError(
            f"eps must satisfy 0 < eps < mu_star/log(2p) = {mu_star / log2p:.6g}, got {eps!r}"
        )
    C = small_ball_constants().C
    r = min(1.0, math.sqrt(4.0 * eps * log2p / (C * mu_star)))
    value = C * r + 4.0 * eps * log2p / (r * mu_star)
    return WindowBound(value, True, PROVENANCE["window_unsigned"], r_star=r)


# variance


def coth_gap(x: float) -> float:
    """``x coth(x) - 1`` without cancellation at small ``x``."""
    if abs(x) < 1e-3:
        x2 = x * x
        return x2 / 3.0 - x2 * x2 / 45.0 + 2.0 * x2**3 / 945.0
    return x * coth(x) - 1.0


class VarianceBound(NamedTuple):
    exact: float
    simplified: float


def variance_lower_bound(mu: float, p: int) -> VarianceBound:
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    p = _check_p(p)
    B = 4.0 * math.log(p)
    exact = mu * mu * coth_gap(1.0 / (2.0 * B))
    simplified = (mu / (15.0 * math.log(p))) ** 2
    return VarianceBound(exact, simplified)


@dataclass(frozen=True)
class BathtubSolution:
    a: float
    b: float
    B: float
    q: float
    A: float
    second_moment: float
    variance: float


def bathtub_minimizer(B: float, q: float, A: float) -> BathtubSolution:
    """Variance-minimizing law with mass ``q`` on ``(0, inf)``, mean ``A`` and density ``<= B/t``.

    The minimizer is ``(B/t) 1{a <= t <= b}`` plus an atom ``1 - q`` at zero.
    """
    if not (B > 0 and A > 0):
        raise DomainError("B and A must be positive")
    if not 0 < q <= 1:
        raise DomainError(f"q must lie in (0, 1], got {q!r}")
    ratio = q / B
    a = A / (B * math.expm1(ratio))
    b = a * math.exp(ratio)
    second = A * A / (2.0 * B) * coth(ratio / 2.0)
    return BathtubSolution(a=a, b=b, B=B, q=q, A=A, second_moment=second, variance=second - A * A)


# approximation rates


@dataclass(frozen=True)
class RateBound:
    n: int
    p: int
    K: float
    b: float
    nu: float
    Delta1: float
    Delta2: float
    eps_star: float
    R: float
    assumption_ok: bool
    assumption_lhs: float
    mu_star: float | None = None
    eps_star_unsigned: float | None = None
    R_star: float | None = None
    provenance: str = PROVENANCE["clt_rate"]

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def clt_rate(n: int, p: int, K: float = 1.0, b: float = 1.0, nu: float = 1.0,
             mu_star_opt: float | None = None) -> RateBound:
    """Rate quantities for the Gaussian and wild-bootstrap approximations.

    ``nu`` is the scale entering the signed rate (``sigma_max`` for the
    quantile-restricted statements, ``mu`` for the uniform ones).
    """
    if int(n) != n or n < 2:
        raise DomainError(f"n must be an integer >= 2, got {n!r}")
    p = _check_p(p)
    if K < 1 or b < 1:
        raise DomainError("K and b must be >= 1")
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu!r}")
    log_p, log_n = math.log(p), math.log(n)
    bk2 = b * K * K
    delta1 = bk2 * log_p**1.5 / math.sqrt(n)
    delta2 = bk2**2 * log_p**2 * log_n**2 / n
    eps_star = nu ** (1 / 3) * bk2 ** (1 / 3) * log_p ** (1 / 6) * n ** (-1 / 6)
    core = bk2**2 * log_p**7 / n
    R = nu ** (-2 / 3) * core ** (1 / 6)
    lhs = bk2 * math.sqrt(log_p) * log_n**2
    extra = {}
    if mu_star_opt is not None:
        if not mu_star_opt > 0:
            raise DomainError("mu_star must be positive")
        extra = dict(
            mu_star=float(mu_star_opt),
            eps_star_unsigned=(mu_star_opt * bk2**2 * log_p**2 / n) ** 0.2,
            R_star=mu_star_opt ** (-0.4) * core**0.1,
        )
    return RateBound(
        n=int(n), p=p, K=float(K), b=float(b), nu=float(nu), Delta1=delta1, Delta2=delta2,
        eps_star=eps_star, R=R, assumption_ok=lhs <= math.sqrt(n), assumption_lhs=lhs, **extra,
    )
