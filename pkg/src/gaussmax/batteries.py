"""Named verification batteries with pinned models, grids, sample sizes and seeds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bootstrap as bs
from . import bounds
from .covariance import CovarianceModel, CovarianceSpec, build, random_dense_spec
from .numerics import DomainError
from .sampler import EmpiricalMaxLaw, SampleConfig, default_delta, density_estimate, quantile, sample_maxima
from .verify import checks
from .verify.bathtub import bathtub_lp_oracle
from .verify.diagnostics import kappa_diagnostic, kappa_sweep, run_counterexample_suite
from .verify.facets import facet_density_oracle, random_rank2_spec, tiling_discrepancy, window_average_density
from .verify.report import DEFAULT_Z, Check, VerificationReport

BATTERIES = ("paper-core", "counterexamples", "bootstrap-size")
DEFAULT_SEED = 7
DEFAULT_N = 1_000_000
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def core_specs() -> list[CovarianceSpec]:
    specs = [CovarianceSpec("identity", {"p": p}) for p in (3, 10, 100, 1000)]
    specs += [CovarianceSpec("spiked_diag", {"p": 10, "delta": d}) for d in (1e-2, 1e-4, 1e-6)]
    specs += [CovarianceSpec("equicorrelated", {"p": 100, "rho": r}) for r in (0.5, 0.95)]
    specs += [CovarianceSpec("weak_decay", {"p": 1000, "alpha": a}) for a in (1.0, 2.0)]
    specs += [random_dense_spec(20, seed) for seed in range(5)]
    specs += [CovarianceSpec("unsigned_counterexample", {"p": p}) for p in (10, 100)]
    return specs


def derived_seed(seed: int, *key: int) -> int:
    """Independent 63-bit seed for sub-experiment ``key`` of a battery."""
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass
class BatteryResult:
    name: str
    report: VerificationReport
    config: dict
    data: dict = field(default_factory=dict)
    plot_data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.report.passed

    def to_dict(self) -> dict:
        out = self.report.to_dict()
        out["battery"] = self.name
        out["config"] = self.config
        out["data"] = self.data
        return out


def signed_t_grid(law: EmpiricalMaxLaw, n_points: int = 30) -> np.ndarray:
    return np.linspace(quantile(law, 0.001) - 0.5 * law.sigma_max, quantile(law, 0.999), n_points)


def unsigned_t_grid(law: EmpiricalMaxLaw, n_points: int = 30) -> np.ndarray:
    return np.linspace(0.0, quantile(law, 0.999, unsigned=True), n_points)


def envelope_plot_rows(model: CovarianceModel, law: EmpiricalMaxLaw, t_grid) -> list[dict]:
    delta = default_delta(law)
    rows = []
    for t in t_grid:
        dens, se = density_estimate(law, t, delta)
        row = {"t": float(t), "empirical_density": dens, "std_error": se}
        for kind in bounds.ENVELOPE_KINDS:
            try:
                row[kind] = bounds.envelope_value(kind, model.sigmas, t, model.p)
            except DomainError:
                row[kind] = math.nan
        rows.append(row)
    return rows


def model_checks(model: CovarianceModel, law: EmpiricalMaxLaw, z: float = DEFAULT_Z) -> VerificationReport:
    """Every law-level check for one model of the core battery."""
    report = VerificationReport(z=z)
    t_env = checks.default_t_grid(model.sigma_max)
    report.extend(checks.check_envelope(model, law, t_env, "scale_free", z=z))
    if model.p <= 100:
        for kind in ("refined_effective_dim", "master_optimized"):
            report.extend(checks.check_envelope(model, law, t_env, kind, z=z))
    report.extend(checks.check_variance_bound(law, model.p, z=z))
    eps_grid = model.sigma_max * np.array([0.01, 0.05, 0.1])
    report.extend(checks.check_window_bounds(model, law, eps_grid, signed_t_grid(law), z=z,
                                             unsigned_t_grid=unsigned_t_grid(law)))
    report.extend(checks.check_small_ball(law, z=z))
    report.extend(checks.check_ehrhard(law))
    report.extend(checks.check_extremal_tail(law, model.sigma_max, z=z))
    report.extend(checks.check_mean_median(law, z=z))
    return report


def variance_consistency(z: float = DEFAULT_Z) -> VerificationReport:
    """Ordering of the exact variance bound against its simplified forms at ``mu = 1``."""
    report = VerificationReport(z=z, name="variance_consistency")
    data = {}
    for p in (3, 10, 100):
        vb = bounds.variance_lower_bound(1.0, p)
        middle = 1.0 / (13.0 * (4.0 * math.log(p)) ** 2)
        data[str(p)] = {"exact": vb.exact, "mu2_over_13B2": middle, "simplified": vb.simplified}
        report.add(Check("variance_consistency/exact_ge_13B2", "variance", {"p": p}, middle, vb.exact,
                         direction="lower", provenance=bounds.PROVENANCE["variance"]))
        report.add(Check("variance_consistency/13B2_ge_simplified", "variance", {"p": p}, vb.simplified, middle,
                         direction="lower", provenance=bounds.PROVENANCE["variance_simplified"]))
    report.extras["variance_consistency"] = data
    return report


def small_ball_constant_checks() -> VerificationReport:
    report = VerificationReport(name="small_ball_constants")
    c = bounds.small_ball_constants()
    # reference values from an independent quadrature of the tail integral
    for name, value, ref, tol in (("w", c.w, 0.6744898, 1e-6), ("C1", c.C1, 0.53816, 1e-4),
                                  ("C0", c.C0, 1.44225, 1e-4)):
        report.add(Check(f"small_ball_constants/{name}", "constant", {}, ref, value, tolerance=tol))
        report.add(Check(f"small_ball_constants/{name}", "constant", {}, ref, value, tolerance=tol,
                         direction="lower"))
    report.extras["small_ball_constants"] = {"w": c.w, "C1": c.C1, "C0": c.C0, "C": c.C}
    return report


def bathtub_checks(seed: int, n_points: int = 10, resolution: int = 10_000) -> VerificationReport:
    report = VerificationReport(name="bathtub")
    rng = np.random.Generator(np.random.PCG64(derived_seed(seed, 30)))
    points = [(1.0, 1.0, 1.0, 0.01)]
    for _ in range(n_points):
        points.append((float(10 ** rng.uniform(-0.5, 1.5)), float(rng.uniform(0.2, 1.0)),
                       float(rng.uniform(0.2, 3.0)), 0.02))
    rows = []
    for B, q, A, rel in points:
        grid_max = 10.0 if (B, q, A) == (1.0, 1.0, 1.0) else None
        oracle = bathtub_lp_oracle(B, q, A, resolution, grid_max)
        closed = bounds.bathtub_minimizer(B, q, A)
        rows.append({"B": B, "q": q, "A": A, "oracle": oracle.variance, "closed_form": closed.variance})
        for direction in ("upper", "lower"):
            report.add(Check("bathtub/oracle_vs_closed_form", "bathtub", {"B": B, "q": q, "A": A},
                             closed.variance, oracle.variance, tolerance=rel * closed.variance,
                             direction=direction, provenance="capped-density variance minimizer"))
    report.extras["bathtub"] = rows
    return report


def facet_checks(seed: int, n_samples: int, workers: int | None, z: float = DEFAULT_Z,
                 n_models: int = 10) -> VerificationReport:
    report = VerificationReport(z=z, name="facets")
    iid = build(CovarianceSpec("identity", {"p": 2}))
    closed = 2.0 * 0.24197072451914337 * 0.8413447460685429
    value = facet_density_oracle(iid, 1.0).density
    for direction in ("upper", "lower"):
        report.add(Check("facets/iid_pair", "facet", {"t": 1.0}, closed, value, tolerance=1e-6,
                         direction=direction, provenance="2 phi(1) Phi(1)"))
    rows = []
    rng = np.random.Generator(np.random.PCG64(derived_seed(seed, 40)))
    for i in range(n_models):
        p = int(rng.integers(3, 9))
        model = build(random_rank2_spec(p, derived_seed(seed, 41, i) % (1 << 31)))
        law = sample_maxima(model, SampleConfig(n_samples, derived_seed(seed, 42, i)), workers)
        t = float(quantile(law, float(rng.uniform(0.3, 0.9))))
        if t <= 0:
            t = 0.1 * model.sigma_max
        result = facet_density_oracle(model, t)
        delta = default_delta(law)
        est, se = density_estimate(law, t, delta)
        avg = window_average_density(model, t, delta)
        master = bounds.master_bound_optimized(model.sigmas, t, model.p)[0]
        label = model.label
        for direction in ("upper", "lower"):
            report.add(Check("facets/oracle_vs_mc", "facet", {"t": t, "delta": delta}, avg, est, se, z=z,
                             direction=direction, model=label, provenance="window-averaged facet density"))
        report.add(Check("facets/oracle_le_master", "master_optimized", {"t": t}, master, result.density,
                         model=label, provenance=bounds.PROVENANCE["master_optimized"]))
        report.add(Check("facets/cone_mass_total", "disjoint_cones", {"t": t}, 1.0, result.cone_mass_total,
                         tolerance=1e-6, model=label, provenance="normal cones over facets are disjoint"))
        report.add(Check("facets/surface_area_bounds", "facet", {"t": t}, 1.0, float(result.facet_checks_ok),
                         direction="lower", model=label, provenance="per-facet isoperimetric and conic bounds"))
        report.add(Check("facets/tiling", "facet", {"t": t}, 0.0, tiling_discrepancy(result.geometry),
                         tolerance=1e-8, model=label, provenance="interval and clipping routes agree"))
        rows.append({"model": label, "p": p, "t": t, "oracle": result.density, "window_average": avg,
                     "mc": est, "mc_se": se, "master": master, "cone_mass_total": result.cone_mass_total})
    report.extras["facets"] = rows
    return report


def run_core_battery(seed: int = DEFAULT_SEED, n_samples: int = DEFAULT_N, workers: int | None = None,
                   z: float = DEFAULT_Z, emit_plot_data: bool = False) -> BatteryResult:
    report = VerificationReport(z=z, name="paper-core")
    laws, plots = {}, {}
    for i, spec in enumerate(core_specs()):
        model = build(spec)
        law = sample_maxima(model, SampleConfig(n_samples, derived_seed(seed, 10, i)), workers)
        report.extend(model_checks(model, law, z))
        laws[model.label] = law.summary()
        if emit_plot_data:
            plots[model.label] = envelope_plot_rows(model, law, checks.default_t_grid(model.sigma_max))
    report.extend(variance_consistency(z))
    report.extend(small_ball_constant_checks())
    report.extend(bathtub_checks(seed))
    report.extend(facet_checks(seed, n_samples, workers, z))
    config = {"battery": "paper-core", "seed": seed, "n_samples": n_samples, "z": z,
              "models": [s.to_dict() for s in core_specs()]}
    return BatteryResult("paper-core", report, config, {"laws": laws}, plots)


def run_counterexamples(seed: int = DEFAULT_SEED, n_samples: int = DEFAULT_N, workers: int | None = None,
                        z: float = DEFAULT_Z) -> BatteryResult:
    report = run_counterexample_suite(n_samples, derived_seed(seed, 50), workers)
    report.name = "counterexamples"
    report.z = z
    sweep = kappa_sweep(n_samples=n_samples, seed=derived_seed(seed, 51), workers=workers)
    for direction, bound in (("lower", -0.6), ("upper", -0.4)):
        report.add(Check("kappa/slope", "kappa", {"deltas": list(sweep.deltas)}, bound, sweep.slope,
                         direction=direction, provenance="sup density ~ delta^(-1/2) for a shrinking coordinate"))
    single = build(CovarianceSpec("scaled_identity", {"p": 1, "scale": 1.0}))
    law = sample_maxima(single, SampleConfig(n_samples, derived_seed(seed, 52)), workers)
    diag = kappa_diagnostic(law)
    ref = 1.0 / (2.0 * math.pi)
    for direction in ("upper", "lower"):
        report.add(Check("kappa/single_coordinate", "kappa", {}, ref, diag.kappa, tolerance=0.1 * ref,
                         direction=direction, provenance="kappa = phi(0)^2 for one coordinate"))
    report.extras["kappa_sweep"] = sweep.to_dict()
    report.extras["kappa_single_coordinate"] = diag.to_dict()
    config = {"battery": "counterexamples", "seed": seed, "n_samples": n_samples, "z": z}
    return BatteryResult("counterexamples", report, config, dict(report.extras))


def run_bootstrap_size(seed: int = DEFAULT_SEED, workers: int | None = None, z: float = DEFAULT_Z,
                       n_samples: int = DEFAULT_N, reps_outer: int = 2000, reps_inner: int = 500,
                       trend_reps: int = 20_000) -> BatteryResult:
    report = VerificationReport(z=z, name="bootstrap-size")
    data: dict = {}
    spiked = build(CovarianceSpec("spiked_diag", {"p": 50, "delta": 1e-4}))
    ref = sample_maxima(spiked, SampleConfig(n_samples, derived_seed(seed, 60)), workers)
    data["reference"] = ref.summary()
    expo = bs.DataGenModel(spiked, "centered_exponential")

    mammen = bs.MultiplierSpec("two_point", GOLDEN)
    size = bs.bootstrap_size_simulation(expo, 400, [0.1, 0.25], reps_outer, reps_inner,
                                        seed=derived_seed(seed, 61), multipliers=mammen, workers=workers,
                                        reference=ref)
    data["size"] = size.to_dict()
    for alpha, lo, hi in ((0.1, 0.05, 0.15), (0.25, 0.19, 0.31)):
        rate = size.rate_for(alpha)
        report.add(Check("bootstrap/size", "size", {"alpha": alpha, "n": 400}, lo, rate, direction="lower",
                         provenance="wild bootstrap critical value, third-moment matching multipliers"))
        report.add(Check("bootstrap/size", "size", {"alpha": alpha, "n": 400}, hi, rate,
                         provenance="wild bootstrap critical value, third-moment matching multipliers"))
    rad = bs.bootstrap_size_simulation(expo, 400, [0.1, 0.25], reps_outer, reps_inner,
                                       seed=derived_seed(seed, 61), workers=workers, reference=ref)
    data["size_rademacher_context"] = rad.to_dict()

    identity = build(CovarianceSpec("identity", {"p": 50}))
    gauss_id = bs.DataGenModel(identity, "gaussian")
    gsize = bs.bootstrap_size_simulation(gauss_id, 400, [0.1], reps_outer, reps_inner,
                                         seed=derived_seed(seed, 62), workers=workers)
    data["size_gaussian_identity"] = gsize.to_dict()
    report.add(Check("bootstrap/size_gaussian", "size", {"alpha": 0.1}, 0.07, gsize.rate_for(0.1),
                     direction="lower"))
    report.add(Check("bootstrap/size_gaussian", "size", {"alpha": 0.1}, 0.13, gsize.rate_for(0.1)))

    gauss = bs.DataGenModel(spiked, "gaussian")
    sanity = bs.clt_experiment(gauss, 400, reps_outer, seed=derived_seed(seed, 63), workers=workers, reference=ref)
    data["gaussian_sanity"] = sanity.to_dict()
    # binomial SE of each level, with the reference-quantile error propagated
    sanity_se = max(math.sqrt(q * (1 - q) * (1.0 / reps_outer + 1.0 / ref.n)) for q in sanity.q_grid)
    report.add(Check("bootstrap/gaussian_sanity", "clt", {"n": 400, "reps": reps_outer},
                     2.0 * sanity_se, sanity.sup_signed,
                     provenance="exactly Gaussian sums: discrepancy is pure Monte Carlo noise"))

    trend_q = (2 / 3, 0.75, 0.85, 0.95)
    trend = {}
    for n in (100, 400, 1600):
        res = bs.clt_experiment(expo, n, trend_reps, seed=derived_seed(seed, 64, n), q_grid=trend_q,
                                workers=workers, reference=ref)
        trend[str(n)] = res.to_dict()
    decreasing = [
        trend["100"]["discrepancies"][k] > trend["400"]["discrepancies"][k] > trend["1600"]["discrepancies"][k]
        for k in range(len(trend_q))
    ]
    data["trend"] = trend
    data["trend_decreasing"] = decreasing
    report.add(Check("bootstrap/monotone_trend", "clt", {"q_grid": list(trend_q), "n": [100, 400, 1600]},
                     3.0, float(sum(decreasing)), direction="lower",
                     provenance="discrepancy decreasing in n at >= 3 of 4 quantile levels"))

    null = bs.sparse_corr_experiment(200, 50, 0.1, 1000, seed=derived_seed(seed, 65), workers=workers)
    power = bs.sparse_corr_experiment(200, 50, 0.1, 1000, signal=0.5, seed=derived_seed(seed, 66), workers=workers)
    data["sparse_corr"] = {"null": null.__dict__, "signal": power.__dict__}
    report.add(Check("sparse_corr/size", "size", {"alpha": 0.1}, 0.15, null.rejection_rate))
    report.add(Check("sparse_corr/power", "power", {"alpha": 0.1}, null.rejection_rate, power.rejection_rate,
                     direction="lower"))
    config = {"battery": "bootstrap-size", "seed": seed, "n_samples": n_samples, "z": z,
              "reps_outer": reps_outer, "reps_inner": reps_inner, "trend_reps": trend_reps,
              "multipliers": {"family": "two_point", "b": GOLDEN}}
    return BatteryResult("bootstrap-size", report, config, data)


def run_battery(name: str, seed: int = DEFAULT_SEED, n_samples: int = DEFAULT_N, workers: int | None = None,
                z: float = DEFAULT_Z, emit_plot_data: bool = False) -> BatteryResult:
    if name == "paper-core":
        return run_core_battery(seed, n_samples, workers, z, emit_plot_data)
    if name == "counterexamples":
        return run_counterexamples(seed, n_samples, workers, z)
    if name == "bootstrap-size":
        return run_bootstrap_size(seed, workers, z, n_samples)
    raise DomainError(f"unknown battery {name!r}; choose from {BATTERIES}")
