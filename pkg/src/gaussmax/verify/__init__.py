"""Empirical and oracle checks of the analytic bounds."""

from .bathtub import BathtubOracleResult, bathtub_lp_oracle
from .checks import (
    check_envelope,
    check_ehrhard,
    check_extremal_tail,
    check_mean_median,
    check_small_ball,
    check_variance_bound,
    check_window_bounds,
)
from .diagnostics import kappa_diagnostic, kappa_sweep, run_counterexample_suite
from .facets import FacetGeometry, UnsupportedRankError, facet_density_oracle
from .report import Check, VerificationReport

__all__ = [
    "BathtubOracleResult",
    "Check",
    "FacetGeometry",
    "UnsupportedRankError",
    "VerificationReport",
    "bathtub_lp_oracle",
    "check_ehrhard",
    "check_envelope",
    "check_extremal_tail",
    "check_mean_median",
    "check_small_ball",
    "check_variance_bound",
    "check_window_bounds",
    "facet_density_oracle",
    "kappa_diagnostic",
    "kappa_sweep",
    "run_counterexample_suite",
]
