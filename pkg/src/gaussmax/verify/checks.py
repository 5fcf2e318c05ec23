"""Monte Carlo checks of the analytic bounds against an :class:`EmpiricalMaxLaw`.

Where a bound depends on an unknown population quantity (the mean of the
maximum, say) it is evaluated at the end of the ``z``-standard-error
confidence interval where the inequality is least demanding, so that a
correct bound fails only with probability of order ``z``-sigma tail mass.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .. import bounds
from ..covariance import CovarianceModel
from ..numerics import DomainError, norm_ppf_array, std_normal_sf
from ..sampler import (
    EmpiricalMaxLaw,
    default_delta,
    density_estimate,
    ecdf,
    quantile,
    window_prob,
)
from .report import DEFAULT_Z, Check, VerificationReport, inapplicable


def _grid(values) -> np.ndarray:
    return np.atleast_1d(np.asarray(values, dtype=float))


def default_t_grid(sigma_max: float, lo: float = 0.3, hi: float = 4.0, step: float = 0.1) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return sigma_max * (lo + step * np.arange(n + 1))


def check_envelope(model: CovarianceModel, law: EmpiricalMaxLaw, t_grid=None, envelope_kind: str = "scale_free",
                   delta: float | None = None, z: float = DEFAULT_Z) -> VerificationReport:
    """Window probabilities against the integrated density envelope.

    For each ``t`` the empirical ``P{t <= M <= t + delta}`` must not exceed
    the integral of the envelope over the same window plus ``z`` SE.
    """
    if t_grid is None:
        t_grid = default_t_grid(model.sigma_max)
    if delta is None:
        delta = default_delta(law)
    report = VerificationReport(z=z, name="envelope")
    for t in _grid(t_grid):
        if not t > 0:
            raise DomainError("envelope checks need t > 0")
        prob, se = window_prob(law, t, delta)
        bound = bounds.integrated_envelope(envelope_kind, model.sigmas, model.p, t, delta)
        report.add(Check(
            name=f"envelope/{envelope_kind}",
            bound_kind=envelope_kind,
            point={"t": float(t), "delta": float(delta)},
            bound_value=bound,
            empirical_value=prob,
            std_error=se,
            z=z,
            provenance=bounds.PROVENANCE[envelope_kind] + " (integrated over the window)",
            model=model.label,
        ))
    return report


def check_variance_bound(law: EmpiricalMaxLaw, p: int, z: float = DEFAULT_Z) -> VerificationReport:
    """``Var(M) >= mu^2 [(1/2B) coth(1/2B) - 1]`` with ``B = 4 log p``."""
    report = VerificationReport(z=z, name="variance")
    name = "variance/coth"
    if not law.mean_signed > z * law.se_mean:
        report.add(inapplicable(name, "variance", {"p": int(p)}, "inapplicable (mu <= 0)", law.label,
                                bounds.PROVENANCE["variance"]))
        return report
    mu_lo = law.mean_signed - z * law.se_mean
    vb = bounds.variance_lower_bound(mu_lo, p)
    report.add(Check(
        name=name,
        bound_kind="variance",
        point={"p": int(p), "mu_used": mu_lo, "mu_hat": law.mean_signed},
        bound_value=vb.exact,
        empirical_value=law.variance,
        std_error=law.se_variance,
        z=z,
        direction="lower",
        provenance=bounds.PROVENANCE["variance"],
        model=law.label,
    ))
    return report


def check_window_bounds(model: CovarianceModel, law: EmpiricalMaxLaw, eps_grid, t_grid,
                        z: float = DEFAULT_Z, unsigned_t_grid=None) -> VerificationReport:
    """Signed and unsigned finite-window bounds over ``t`` and ``eps`` grids.

    Unsigned checks are skipped (reported inapplicable) for ``eps`` outside
    ``(0, mu*/log(2p))``.
    """
    report = VerificationReport(z=z, name="window")
    p = model.p
    sigma_max = model.sigma_max
    t_unsigned = _grid(t_grid if unsigned_t_grid is None else unsigned_t_grid)
    mu_lo = law.mean_signed - z * law.se_mean
    mu_star_lo = law.mean_unsigned - z * law.se_mean_unsigned
    for eps in _grid(eps_grid):
        if mu_lo > 0:
            wb = bounds.window_bound_signed(p, mu_lo, sigma_max, eps)
            for t in _grid(t_grid):
                prob, se = window_prob(law, t, eps)
                report.add(Check(
                    name="window/signed",
                    bound_kind="window_signed",
                    point={"t": float(t), "eps": float(eps), "mu_used": mu_lo,
                           "eps_admissible": wb.eps_admissible},
                    bound_value=wb.value,
                    empirical_value=prob,
                    std_error=se,
                    z=z,
                    provenance=wb.provenance,
                    model=model.label,
                ))
        else:
            report.add(inapplicable("window/signed", "window_signed", {"eps": float(eps)},
                                    "inapplicable (mu <= 0)", model.label))
        if mu_star_lo > 0 and eps < mu_star_lo / math.log(2 * p):
            wb = bounds.window_bound_unsigned(p, mu_star_lo, eps)
            for t in t_unsigned:
                prob, se = window_prob(law, t, eps, unsigned=True)
                report.add(Check(
                    name="window/unsigned",
                    bound_kind="window_unsigned",
                    point={"t": float(t), "eps": float(eps), "mu_star_used": mu_star_lo,
                           "r_star": wb.r_star},
                    bound_value=wb.value,
                    empirical_value=prob,
                    std_error=se,
                    z=z,
                    provenance=wb.provenance,
                    model=model.label,
                ))
        else:
            report.add(inapplicable("window/unsigned", "window_unsigned", {"eps": float(eps)},
                                    "inapplicable (eps >= mu*/log(2p))", model.label))
    return report


def check_small_ball(law: EmpiricalMaxLaw, r_grid=None, z: float = DEFAULT_Z) -> VerificationReport:
    """``P{M* <= r mu*} <= C r`` for the small-ball constant ``C``."""
    if r_grid is None:
        r_grid = np.round(np.arange(0.05, 0.951, 0.05), 10)
    const = bounds.small_ball_constants()
    report = VerificationReport(z=z, name="small_ball")
    mu_lo = law.mean_unsigned - z * law.se_mean_unsigned
    for r in _grid(r_grid):
        prob = ecdf(law, r * mu_lo, unsigned=True)
        report.add(Check(
            name="small_ball",
            bound_kind="small_ball",
            point={"r": float(r), "mu_star_used": mu_lo},
            bound_value=const.C * r,
            empirical_value=prob,
            std_error=math.sqrt(prob * (1 - prob) / law.n),
            z=z,
            provenance=bounds.PROVENANCE["small_ball"],
            model=law.label,
        ))
    return report


def dkw_epsilon(n: int, alpha: float = 0.01) -> float:
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def ehrhard_t_grid(law: EmpiricalMaxLaw, n_points: int = 41, q_lo: float = 0.01, q_hi: float = 0.99) -> np.ndarray:
    lo, hi = quantile(law, q_lo), quantile(law, q_hi)
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, n_points)


def check_ehrhard(law: EmpiricalMaxLaw, t_grid=None, alpha: float = 0.01) -> VerificationReport:
    """Concavity of ``G = Phi^{-1}(F)`` on an equally spaced grid.

    Each second difference ``G(t-h) - 2G(t) + G(t+h)`` must be at most the
    worst-case perturbation allowed by a DKW band of level ``alpha`` mapped
    through ``Phi^{-1}``. No ``z`` multiple is involved; the band is the
    tolerance.
    """
    grid = ehrhard_t_grid(law) if t_grid is None else _grid(t_grid)
    report = VerificationReport(name="ehrhard")
    if grid.size < 3:
        return report
    n = law.n
    eps = dkw_epsilon(n, alpha)
    f = np.clip(np.asarray(ecdf(law, grid), dtype=float), 1.0 / n, 1.0 - 1.0 / n)
    g = norm_ppf_array(f)
    lo = norm_ppf_array(np.clip(f - eps, 0.0, 1.0))
    hi = norm_ppf_array(np.clip(f + eps, 0.0, 1.0))
    dev = np.maximum(g - lo, hi - g)
    for k in range(1, grid.size - 1):
        second = g[k - 1] - 2.0 * g[k] + g[k + 1]
        tol = dev[k - 1] + 2.0 * dev[k] + dev[k + 1]
        report.add(Check(
            name="ehrhard/concavity",
            bound_kind="ehrhard",
            point={"t": float(grid[k]), "h": float(grid[k] - grid[k - 1])},
            bound_value=0.0,
            empirical_value=float(second),
            std_error=0.0,
            tolerance=float(tol) if math.isfinite(tol) else math.inf,
            provenance="G = Phi^{-1}(F) concave; DKW band at level %g" % alpha,
            model=law.label,
        ))
    return report


def _median_se(law: EmpiricalMaxLaw) -> float:
    # asymptotic sd of the sample median, 1 / (2 f(m) sqrt(N))
    f_m, _ = density_estimate(law, law.median - 0.5 * default_delta(law), default_delta(law))
    return 1.0 / (2.0 * f_m * math.sqrt(law.n)) if f_m > 0 else math.inf


def check_extremal_tail(law: EmpiricalMaxLaw, sigma_max: float | None = None, h_grid=None,
                        z: float = DEFAULT_Z) -> VerificationReport:
    """``1 - F(m + h sigma_max) <= 1 - Phi(h)`` for ``h`` in ``[0, 4]``.

    The standard error combines the binomial error of the ECDF with the
    error of the sample median propagated through the local density.
    """
    sigma_max = law.sigma_max if sigma_max is None else float(sigma_max)
    if h_grid is None:
        h_grid = np.linspace(0.0, 4.0, 17)
    report = VerificationReport(z=z, name="extremal_tail")
    se_m = _median_se(law)
    delta = default_delta(law)
    for h in _grid(h_grid):
        x = law.median + h * sigma_max
        tail = 1.0 - ecdf(law, x)
        f_x, _ = density_estimate(law, x - 0.5 * delta, delta)
        se = math.sqrt(tail * (1 - tail) / law.n + f_x**2 * se_m**2)
        report.add(Check(
            name="extremal_tail",
            bound_kind="extremal_tail",
            point={"h": float(h), "x": float(x)},
            bound_value=std_normal_sf(h),
            empirical_value=tail,
            std_error=se,
            z=z,
            provenance=bounds.PROVENANCE["extremal_tail"],
            model=law.label,
        ))
    return report


def check_mean_median(law: EmpiricalMaxLaw, z: float = DEFAULT_Z) -> VerificationReport:
    """Mean of the maximum is at least its median."""
    report = VerificationReport(z=z, name="mean_median")
    se = math.sqrt(law.se_mean**2 + _median_se(law) ** 2)
    report.add(Check(
        name="mean_ge_median",
        bound_kind="mean_median",
        point={},
        bound_value=law.median,
        empirical_value=law.mean_signed,
        std_error=se,
        z=z,
        direction="lower",
        provenance="E M >= median(M) by concavity of G",
        model=law.label,
    ))
    return report


def scaled_envelope_ratio(model: CovarianceModel, factor: float, t_grid: Sequence[float]) -> np.ndarray:
    """Ratio of scale-free envelope values on ``t / factor`` to those on ``t``.

    The envelope is homogeneous of degree -1 in ``t``, so the ratio equals
    ``factor`` exactly: dividing the process by ``factor`` multiplies its
    density bound by ``factor`` at matching quantiles.
    """
    grid = _grid(t_grid)
    return np.array([bounds.scale_free_envelope(t / factor, model.p) / bounds.scale_free_envelope(t, model.p)
                     for t in grid])
