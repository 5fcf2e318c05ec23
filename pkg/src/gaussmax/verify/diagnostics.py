"""Density-regularity diagnostic and the counterexample battery."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import bounds
from ..covariance import CovarianceSpec, build, weak_decay_sigmas
from ..sampler import SampleConfig, iid_exact_density, sample_maxima, sup_density
from .report import Check, VerificationReport

INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
KAPPA_DELTAS = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class KappaDiagnostic:
    label: str
    sup_density: float
    variance: float

    @property
    def kappa(self) -> float:
        return self.sup_density**2 * self.variance

    def to_dict(self) -> dict:
        return {"label": self.label, "sup_density": self.sup_density, "variance": self.variance,
                "kappa": self.kappa}


def kappa_diagnostic(law, k: int | None = None) -> KappaDiagnostic:
    """``kappa_hat = (sup f_hat)^2 Var_hat``; small values mean a flat density."""
    return KappaDiagnostic(law.label, sup_density(law, k), law.variance)


@dataclass(frozen=True)
class KappaSweep:
    deltas: tuple
    sup_densities: tuple
    kappas: tuple
    slope: float
    intercept: float

    def to_dict(self) -> dict:
        return {"deltas": list(self.deltas), "sup_densities": list(self.sup_densities),
                "kappas": list(self.kappas), "slope": self.slope, "intercept": self.intercept}


def kappa_sweep(deltas: Sequence[float] = KAPPA_DELTAS, p: int = 2, n_samples: int = 1_000_000,
                seed: int = 0, workers: int | None = None) -> KappaSweep:
    """Regress ``log sup f_hat`` on ``log delta`` over spiked diagonal models.

    A coordinate of variance ``delta`` next to unit-variance ones makes the
    density peak grow like ``delta^(-1/2)`` while the variance stays bounded.
    """
    sups, kappas = [], []
    for i, d in enumerate(deltas):
        model = build(CovarianceSpec("spiked_diag", {"p": p, "delta": float(d)}))
        law = sample_maxima(model, SampleConfig(n_samples, seed + i), workers)
        diag = kappa_diagnostic(law)
        sups.append(diag.sup_density)
        kappas.append(diag.kappa)
    slope, intercept = np.polyfit(np.log(deltas), np.log(sups), 1)
    return KappaSweep(tuple(float(d) for d in deltas), tuple(sups), tuple(kappas), float(slope), float(intercept))


def boundary_ratio(p: int, t: float = 1.0) -> float:
    """``f(t) t / sqrt(log p)`` for ``p`` iid ``N(0, t^2 / (2 log p))`` coordinates."""
    s = t / math.sqrt(2.0 * math.log(p))
    return iid_exact_density(p, s, t) * t / math.sqrt(math.log(p))


def iid_sup_density(p: int, s: float) -> float:
    """Maximum of the exact iid density, located on a fine grid around its mode."""
    grid = s * np.linspace(-1.0, math.sqrt(2.0 * math.log(p)) + 3.0, 20001)
    vals = iid_exact_density(p, s, grid)
    j = int(np.argmax(vals))
    fine = np.linspace(grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)], 2001)
    return float(np.max(iid_exact_density(p, s, fine)))


def _bracket(report: VerificationReport, name: str, value: float, lo: float, hi: float, point: dict,
             provenance: str) -> None:
    report.add(Check(name, name, point, lo, value, direction="lower", provenance=provenance, model=name))
    report.add(Check(name, name, point, hi, value, direction="upper", provenance=provenance, model=name))


def run_counterexample_suite(n_samples: int = 1_000_000, seed: int = 0, workers: int | None = None,
                             boundary_ps: Sequence[int] = (100, 1000, 10_000, 100_000),
                             weak_ps: Sequence[int] = (100, 1000, 10_000),
                             rescaled_ps: Sequence[int] = (100, 1000, 10_000)) -> VerificationReport:
    """Tightness and contrast examples, each asserted as explicit brackets.

    (a) boundary iid model: the ratio ``f(t) t / sqrt(log p)`` lies in
        ``[0.4, 1/sqrt(pi)]`` and increases with ``p``;
    (b) weak-decay profiles: with ``alpha = 2`` the bound varies by less than
        5% across ``p``, with ``alpha = 1`` it grows by more than 50%;
    (c) identity rescaled by ``(log p)^(-1/2)``: the Monte Carlo sup density
        over ``log p`` lies in ``[0.2, 1.2]`` and within 10% of the exact value.
    """
    report = VerificationReport(name="counterexamples")
    ratios = [boundary_ratio(p) for p in boundary_ps]
    prov_a = "iid boundary model, ratio f(t) t / sqrt(log p), limit 1/sqrt(pi)"
    for p, r in zip(boundary_ps, ratios):
        _bracket(report, "counterexample/boundary_ratio", r, 0.4, INV_SQRT_PI, {"p": p, "t": 1.0}, prov_a)
    for (p0, r0), (p1, r1) in zip(zip(boundary_ps, ratios), zip(boundary_ps[1:], ratios[1:])):
        report.add(Check("counterexample/boundary_monotone", "monotone", {"p_from": p0, "p_to": p1},
                         r0, r1, direction="lower", provenance=prov_a))
    report.extras["boundary_ratios"] = dict(zip(map(str, boundary_ps), ratios))

    weak = {}
    for alpha in (1.0, 2.0):
        weak[alpha] = [bounds.weak_decay_bound(weak_decay_sigmas(p, alpha), 1.0) for p in weak_ps]
    spread2 = max(weak[2.0]) / min(weak[2.0])
    growth1 = weak[1.0][-1] / weak[1.0][0]
    report.add(Check("counterexample/weak_decay_stable", "weak_decay", {"alpha": 2.0, "ps": list(weak_ps)},
                     1.05, spread2, provenance=bounds.PROVENANCE["weak_decay"]))
    report.add(Check("counterexample/weak_decay_growth", "weak_decay", {"alpha": 1.0, "ps": list(weak_ps)},
                     1.5, growth1, direction="lower", provenance=bounds.PROVENANCE["weak_decay"]))
    report.extras["weak_decay_bounds"] = {str(a): dict(zip(map(str, weak_ps), v)) for a, v in weak.items()}

    prov_c = "identity scaled by (log p)^(-1/2): sup density of order log p"
    rescaled = {}
    for i, p in enumerate(rescaled_ps):
        scale = 1.0 / math.sqrt(math.log(p))
        model = build(CovarianceSpec("scaled_identity", {"p": p, "scale": scale}))
        law = sample_maxima(model, SampleConfig(n_samples, seed + i), workers)
        mc = sup_density(law)
        exact = iid_sup_density(p, scale)
        rescaled[str(p)] = {"mc": mc, "exact": exact, "log_p": math.log(p)}
        _bracket(report, "counterexample/rescaled_sup_over_logp", mc / math.log(p), 0.2, 1.2, {"p": p}, prov_c)
        report.add(Check("counterexample/rescaled_mc_vs_exact", "sup_density", {"p": p},
                         exact, mc, tolerance=0.1 * exact, direction="upper", provenance=prov_c))
        report.add(Check("counterexample/rescaled_mc_vs_exact", "sup_density", {"p": p},
                         exact, mc, tolerance=0.1 * exact, direction="lower", provenance=prov_c))
    report.extras["rescaled_sup_density"] = rescaled
    return report
