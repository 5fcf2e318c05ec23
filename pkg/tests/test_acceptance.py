"""Acceptance criteria 1-11, run through the command-line batteries.

Each battery runs twice: once fresh with eight workers and once re-executed
from the first run's manifest with a single worker. The second run feeds
the determinism criterion; all other criteria read the first run's results.
"""

import json
import math
import time

import pytest

from scipy import stats

from gaussmax import bounds, cli
from gaussmax.batteries import core_specs
from gaussmax.sampler import iid_exact_density

from .conftest import record_criterion

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

BATTERY_SEED = 7
N_CORE_MODELS = len(core_specs())


def _run_battery(name, out_dir):
    first, second = out_dir / "workers8", out_dir / "workers1"
    start = time.perf_counter()
    code_a = cli.main(["verify", "--battery", name, "--seed", str(BATTERY_SEED), "--workers", "8",
                       "--out-dir", str(first)])
    elapsed = time.perf_counter() - start
    code_b = cli.main(["verify", "--from-manifest", str(first / "manifest.json"), "--workers", "1",
                       "--out-dir", str(second)])
    results = json.loads((first / "results.json").read_text())
    return {"results": results, "elapsed": elapsed, "codes": (code_a, code_b), "dirs": (first, second)}


@pytest.fixture(scope="module")
def core(tmp_path_factory):
    return _run_battery("paper-core", tmp_path_factory.mktemp("core"))


@pytest.fixture(scope="module")
def counterexamples(tmp_path_factory):
    return _run_battery("counterexamples", tmp_path_factory.mktemp("counterexamples"))


@pytest.fixture(scope="module")
def bootstrap_size(tmp_path_factory):
    return _run_battery("bootstrap-size", tmp_path_factory.mktemp("bootstrap"))


def _checks(run, prefix):
    return [c for c in run["results"]["checks"] if c["name"].startswith(prefix)]


def _summary(checks):
    applicable = [c for c in checks if c["status"] != "inapplicable"]
    failed = [c for c in applicable if c["status"] == "fail"]
    margins = [float(c["margin"]) for c in applicable]
    return applicable, failed, (min(margins) if margins else math.nan)


def _models(checks):
    return {c["model"] for c in checks if c["model"]}


def test_criterion_01_scale_free_envelope(core):
    checks = _checks(core, "envelope/scale_free")
    applicable, failed, margin = _summary(checks)
    models = _models(checks)
    ok = bool(applicable) and not failed and len(models) == N_CORE_MODELS
    record_criterion(1, ok, f"{len(applicable)} window checks on {len(models)} models, {len(failed)} failures, "
                            f"min margin {margin:.3g}, core battery {core['elapsed']:.0f}s")
    assert len(models) == N_CORE_MODELS
    assert not failed


def test_criterion_02_boundary_tightness(counterexamples):
    ratios = counterexamples["results"]["extras"]["boundary_ratios"]
    values = [ratios[str(p)] for p in (100, 1000, 10_000, 100_000)]
    s = 1.0 / math.sqrt(2.0 * math.log(100))
    direct = iid_exact_density(100, s, 1.0) / math.sqrt(math.log(100))
    monotone = all(b > a for a, b in zip(values, values[1:]))
    below_limit = values[-1] < 1.0 / math.sqrt(math.pi)
    close = abs(values[0] - 0.50079) <= 1e-4 and abs(direct - values[0]) <= 1e-12
    _, failed, _ = _summary(_checks(counterexamples, "counterexample/boundary"))
    ok = monotone and below_limit and close and not failed
    record_criterion(2, ok, "ratios " + ", ".join(f"{v:.5f}" for v in values) + " toward 0.56419")
    assert close and monotone and below_limit and not failed


def test_criterion_03_variance(core):
    applicable, failed, margin = _summary(_checks(core, "variance/coth"))
    _, failed_order, _ = _summary(_checks(core, "variance_consistency"))
    vb = bounds.variance_lower_bound(1.0, 3)
    B = 4.0 * math.log(3)
    # reference values from 30-digit evaluations of x coth x - 1 and 1/(13 B^2)
    values_ok = abs(vb.exact - 0.0043115690) <= 1e-6 and abs(1.0 / (13 * B * B) - 0.003983) <= 1e-6
    ok = bool(applicable) and not failed and not failed_order and values_ok
    record_criterion(3, ok, f"{len(applicable)} variance checks, min margin {margin:.3g}; "
                            f"p=3: {vb.exact:.7f} >= {1 / (13 * B * B):.7f} >= {vb.simplified:.7f}")
    assert len(applicable) == N_CORE_MODELS
    assert not failed and not failed_order and values_ok


def test_criterion_04_bathtub_oracle(core):
    checks = _checks(core, "bathtub/oracle_vs_closed_form")
    applicable, failed, _ = _summary(checks)
    rows = core["results"]["extras"]["bathtub"]
    unit = rows[0]
    ok = len(rows) == 11 and not failed and abs(unit["oracle"] - 0.08198) <= 0.01 * 0.08198
    worst = max(abs(r["oracle"] - r["closed_form"]) / r["closed_form"] for r in rows)
    record_criterion(4, ok, f"(1,1,1) oracle {unit['oracle']:.6f} vs {unit['closed_form']:.6f}; "
                            f"worst relative gap over 11 points {worst:.2e}")
    assert ok


def test_criterion_05_facet_oracle(core):
    checks = _checks(core, "facets/")
    applicable, failed, _ = _summary(checks)
    rows = core["results"]["extras"]["facets"]
    pair = [c for c in checks if c["name"] == "facets/iid_pair"][0]
    ok = len(rows) == 10 and not failed and abs(pair["empirical_value"] - 2 * stats.norm.pdf(1.0) * stats.norm.cdf(1.0)) <= 1e-6
    record_criterion(5, ok, f"iid pair {pair['empirical_value']:.8f}; {len(rows)} rank-2 models, "
                            f"{len(failed)} of {len(applicable)} checks failed, max cone mass "
                            f"{max(r['cone_mass_total'] for r in rows):.6f}")
    assert ok


def test_criterion_06_small_ball(core):
    consts = core["results"]["extras"]["small_ball_constants"]
    _, failed_const, _ = _summary(_checks(core, "small_ball_constants/"))
    applicable, failed, margin = _summary(_checks(core, "small_ball/") + [
        c for c in core["results"]["checks"] if c["name"] == "small_ball"])
    ok = not failed_const and not failed and len(applicable) == N_CORE_MODELS * 19
    record_criterion(6, ok, f"w={consts['w']:.7f} C1={consts['C1']:.5f} C0={consts['C0']:.5f}; "
                            f"{len(applicable)} small-ball checks, min margin {margin:.3g}")
    assert ok


def test_criterion_07_window_bounds(core):
    signed = _checks(core, "window/signed")
    unsigned = _checks(core, "window/unsigned")
    a_s, f_s, m_s = _summary(signed)
    a_u, f_u, m_u = _summary(unsigned)
    near_zero = [c for c in a_u if c["model"].startswith("unsigned_counterexample") and c["point"]["t"] <= 0.05]
    ok = not f_s and not f_u and bool(near_zero) and bool(a_s) and bool(a_u)
    record_criterion(7, ok, f"signed {len(a_s)} checks (min margin {m_s:.3g}), unsigned {len(a_u)} "
                            f"(min margin {m_u:.3g}), {len(near_zero)} unsigned checks at t <= 0.05")
    assert ok


def test_criterion_08_ehrhard_extremal(core):
    parts = {name: _summary(_checks(core, name)) for name in ("ehrhard/", "extremal_tail", "mean_ge_median")}
    models = {name: _models(_checks(core, name)) for name in parts}
    ok = all(not f and a for a, f, _ in parts.values()) and all(len(m) == N_CORE_MODELS for m in models.values())
    detail = "; ".join(f"{name.rstrip('/')}: {len(a)} checks, min margin {m:.3g}" for name, (a, _, m) in parts.items())
    record_criterion(8, ok, detail)
    assert ok


def test_criterion_09_kappa_slope(counterexamples):
    sweep = counterexamples["results"]["extras"]["kappa_sweep"]
    slope = sweep["slope"]
    ok = abs(slope + 0.5) <= 0.1
    record_criterion(9, ok, f"slope {slope:.4f} over deltas {sweep['deltas']}")
    assert ok


def test_criterion_10_bootstrap(bootstrap_size):
    res = bootstrap_size["results"]
    size = res["data"]["size"]
    parts = {}
    for name in ("bootstrap/size", "bootstrap/size_gaussian", "bootstrap/gaussian_sanity",
                 "bootstrap/monotone_trend", "sparse_corr/"):
        checks = [c for c in res["checks"] if c["name"] == name or (name.endswith("/") and c["name"].startswith(name))]
        parts[name] = not _summary(checks)[1] and bool(checks)
    sanity = [c for c in res["checks"] if c["name"] == "bootstrap/gaussian_sanity"][0]
    ok = all(parts.values())
    failing = [k for k, v in parts.items() if not v]
    record_criterion(10, ok, f"size {size['rejection_rates'][0]:.4f} (alpha .1), {size['rejection_rates'][1]:.4f} "
                             f"(alpha .25); gaussian sanity {sanity['empirical_value']:.4f} vs 2SE "
                             f"{sanity['bound_value']:.4f}; trend {res['data']['trend_decreasing']}; "
                             f"{bootstrap_size['elapsed']:.0f}s" + (f"; failing: {failing}" if failing else ""))
    assert ok, f"failing sub-checks: {failing}"


def test_criterion_11_determinism(core, counterexamples, bootstrap_size):
    mismatches = []
    for name, run in (("core", core), ("counterexamples", counterexamples), ("bootstrap", bootstrap_size)):
        first, second = run["dirs"]
        for fname in ("results.json", "results.csv"):
            if (first / fname).read_bytes() != (second / fname).read_bytes():
                mismatches.append(f"{name}/{fname}")
        m1 = json.loads((first / "manifest.json").read_text())
        m2 = json.loads((second / "manifest.json").read_text())
        if m1["outputs"] != m2["outputs"]:
            mismatches.append(f"{name}/manifest outputs")
    record_criterion(11, not mismatches, "workers 8 vs manifest rerun with workers 1: "
                     + ("byte-identical for all batteries" if not mismatches else f"differ: {mismatches}"))
    assert not mismatches


def test_exit_codes_follow_outcome(core, counterexamples, bootstrap_size):
    for run in (core, counterexamples, bootstrap_size):
        passed = run["results"]["summary"]["passed"]
        assert run["codes"] == ((0, 0) if passed else (1, 1))
