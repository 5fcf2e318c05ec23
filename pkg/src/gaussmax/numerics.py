"""Scalar special functions for the standard normal law.

Everything here is a pure function of its arguments. Scalar entry points
validate their input and raise :class:`DomainError`; the ``*_array``
helpers are unchecked vectorized counterparts used by the Monte Carlo code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_COTH_SERIES_CUTOFF = 1e-4
_QUANTILE_BRACKET = 38.5


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


def _finite(x: float, name: str = "x") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def std_normal_pdf(x: float) -> float:
    x = _finite(x)
    return INV_SQRT_2PI * math.exp(-0.5 * x * x)


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF through the complementary error function.

    ``erfc`` keeps full relative accuracy in the lower tail, which a
    ``1 + erf`` formulation would lose.
    """
    x = _finite(x)
    return 0.5 * math.erfc(-x / SQRT2)


def std_normal_sf(x: float) -> float:
    """Upper tail ``1 - Phi(x)`` without cancellation."""
    x = _finite(x)
    return 0.5 * math.erfc(x / SQRT2)


def _lower_quantile(q: float) -> float:
    # Solve log Phi(x) = log q for q <= 1/2. log Phi is concave and
    # increasing, so Newton iterates approach the root monotonically from
    # the left after the first step; the bracket guards against overshoot.
    target = math.log(q)
    lo, hi = -_QUANTILE_BRACKET, 0.0
    x = 0.0
    for _ in range(200):
        cdf = 0.5 * math.erfc(-x / SQRT2)
        g = math.log(cdf) - target
        if g > 0:
            hi = x
        else:
            lo = x
        if g == 0.0 or hi - lo < 1e-15 * max(1.0, abs(x)):
            break
        slope = INV_SQRT_2PI * math.exp(-0.5 * x * x) / cdf
        step = x - g / slope
        x = step if lo < step < hi else 0.5 * (lo + hi)
    return x


def std_normal_quantile(q: float) -> float:
    """Inverse of :func:`std_normal_cdf` on the open unit interval.

    Safeguarded Newton iteration with a bisection fallback; deterministic and
    free of tabulated rational approximations.
    """
    q = _finite(q, "q")
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q!r}")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return _lower_quantile(q)
    return -_lower_quantile(1.0 - q)


def coth(x: float) -> float:
    x = _finite(x)
    if x == 0.0:
        raise DomainError("coth is undefined at 0")
    if abs(x) < _COTH_SERIES_CUTOFF:
        return 1.0 / x + x / 3.0
    return 1.0 / math.tanh(x)


def gaussian_tail_integral(a: float) -> float:
    """Return the integral of ``1 - Phi(u)`` over ``[a, inf)``.

    Uses the identity ``phi(a) - a * (1 - Phi(a))``.
    """
    a = _finite(a, "a")
    if a < 0:
        raise DomainError(f"a must be nonnegative, got {a!r}")
    return std_normal_pdf(a) - a * std_normal_sf(a)


# vectorized kernels (no validation)

def norm_pdf_array(x):
    x = np.asarray(x, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * x * x)


def norm_cdf_array(x):
    return special.ndtr(np.asarray(x, dtype=float))


def norm_ppf_array(q):
    return special.ndtri(np.asarray(q, dtype=float))


@dataclass(frozen=True)
class NumericContext:
    """Tolerances plus the normal-law evaluators shared across modules."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-9
    phi: Callable[[float], float] = std_normal_pdf
    Phi: Callable[[float], float] = std_normal_cdf
    Phi_inv: Callable[[float], float] = std_normal_quantile


DEFAULT_CONTEXT = NumericContext()
