"""Command-line entry point.

Every run writes ``manifest.json`` (resolved configuration, output hashes and,
in a separate ``runtime`` block, timestamps and worker count) next to its
results. Results files never contain timestamps, so re-running a manifest
reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, batteries, bounds
from . import bootstrap as bs
from .covariance import CovarianceSpec, ModelError, build, load_spec
from .numerics import DomainError
from .sampler import ResourceError, SampleConfig, sample_maxima
from .streams import default_workers
from .verify.checks import default_t_grid
from .verify.report import SCHEMA_VERSION, VerificationReport, _clean

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
SUBCOMMANDS = ("bounds", "sample", "verify", "bootstrap", "report")
BOUND_COLUMNS = ("scale_free", "refined_effective_dim", "master", "master_optimized", "weak_decay")


class ConfigError(Exception):
    """Invalid command line or input document."""


def parse_grid(text: str) -> list[float]:
    """Parse ``a:b:step`` (inclusive of ``b`` up to rounding) or a comma list."""
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if not step > 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / step + 1e-9))
            return [round(a + k * step, 12) for k in range(n + 1)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--t-grid: expected 'start:stop:step' or a comma list, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaussmax", description="Bounds and Monte Carlo checks for Gaussian maxima.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--spec", help="JSON input document")
        p.add_argument("--out-dir", default="gaussmax-out")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--n-samples", type=int, default=None)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--workers", type=int, default=None, help="thread pool size (default: GAUSSMAX_WORKERS or CPU count)")
        p.add_argument("--z", type=float, default=3.0)
        p.add_argument("--battery", choices=batteries.BATTERIES, default=None)
        p.add_argument("--t-grid", default=None)
        p.add_argument("--export-samples", action="store_true")
        p.add_argument("--emit-plot-data", action="store_true")
        p.add_argument("--from-manifest", default=None, help="re-run the configuration recorded in a manifest")
    return parser


# output helpers


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv_text(rows: list[dict], header: list[str] | None = None) -> str:
    header = header or (list(rows[0].keys()) if rows else ["schema_version"])
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row.get(k, "")) for k in header})
    return buf.getvalue()


def _cell(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    if isinstance(value, (dict, list)):
        return json.dumps(_clean(value), sort_keys=True)
    return value


class Outputs:
    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: dict[str, str] = {}

    def write_text(self, name: str, text: str) -> None:
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        self.files[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    def write_bytes(self, name: str, data: bytes) -> None:
        (self.dir / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()


def _load_json(cfg: dict, what: str) -> dict:
    if cfg.get("spec_document") is not None:
        return cfg["spec_document"]
    path = cfg["spec"]
    if path is None:
        raise ConfigError(f"{what}: --spec is required")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{what}: cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    # embedded so that a manifest rerun does not depend on the input file
    cfg["spec_document"] = doc
    return doc


def _covariance(doc: dict, field_name: str = "model") -> CovarianceSpec:
    payload = doc.get(field_name, doc)
    try:
        return load_spec(payload)
    except (DomainError, ModelError) as exc:
        raise ConfigError(f"field '{field_name}': {exc}") from None


# subcommands


def run_bounds(cfg: dict, out: Outputs) -> int:
    doc = _load_json(cfg, "bounds")
    spec = _covariance(doc)
    model = build(spec)
    sigma_max = model.sigma_max
    grid = parse_grid(cfg["t_grid"]) if cfg["t_grid"] else list(
        sigma_max * np.round(np.arange(0.3, 4.0001, 0.1), 10))
    cfg["resolved"] = {"model": spec.to_dict(), "t_grid": grid}
    rows = []
    for t in grid:
        row = {"schema_version": SCHEMA_VERSION, "t": t}
        if t <= 0:
            raise ConfigError(f"--t-grid: all t must be positive, got {t}")
        try:
            row["p_star"] = bounds.effective_dimension(model.sigmas, t, model.p)
            row["scale_free"] = bounds.scale_free_envelope(t, model.p)
            row["refined_effective_dim"] = bounds.refined_envelope(model.sigmas, t, model.p)
            u0 = t / math.sqrt(2.0 * math.log(model.p))
            row["master"] = bounds.master_bound(model.sigmas, t, u0)
            row["master_optimized"], row["u_opt"] = bounds.master_bound_optimized(model.sigmas, t, model.p)
            row["weak_decay"] = bounds.weak_decay_bound(model.sigmas, t)
        except DomainError as exc:
            raise ConfigError(f"bounds: {exc}") from None
        rows.append(row)
    header = ["schema_version", "t", *BOUND_COLUMNS, "p_star", "u_opt"]
    sb = bounds.small_ball_constants()
    constants = {
        "schema_version": SCHEMA_VERSION,
        "model": model.summary(),
        "C_w": bounds.C_WEAK,
        "small_ball": {"w": sb.w, "C1": sb.C1, "C0": sb.C0, "C": sb.C},
        "provenance": {k: bounds.PROVENANCE[k] for k in BOUND_COLUMNS},
    }
    if cfg["format"] == "csv":
        out.write_text("results.csv", _csv_text(rows, header))
        out.write_text("constants.json", _dumps(constants))
    else:
        out.write_text("results.json", _dumps({**constants, "rows": rows}))
    return EXIT_OK


def _sample_config(cfg: dict, doc: dict) -> SampleConfig:
    n = cfg["n_samples"] if cfg["n_samples"] is not None else doc.get("n_samples", 1_000_000)
    seed = cfg["seed"] if cfg["seed"] is not None else doc.get("seed", 0)
    try:
        return SampleConfig(int(n), int(seed))
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def run_sample(cfg: dict, out: Outputs, workers: int) -> int:
    doc = _load_json(cfg, "sample")
    spec = _covariance(doc)
    model = build(spec)
    scfg = _sample_config(cfg, doc)
    cfg["resolved"] = {"model": spec.to_dict(), **scfg.to_dict()}
    law = sample_maxima(model, scfg, workers)
    summary = {"schema_version": SCHEMA_VERSION, **law.summary()}
    if cfg["format"] == "csv":
        out.write_text("results.csv", _csv_text([summary]))
    else:
        out.write_text("results.json", _dumps(summary))
    if cfg["export_samples"]:
        if cfg["format"] == "csv":
            rows = [{"signed": float(a), "unsigned": float(b)}
                    for a, b in zip(law.samples_signed, law.samples_unsigned)]
            out.write_text("samples.csv", _csv_text(rows, ["signed", "unsigned"]))
        else:
            buf = io.BytesIO()
            np.save(buf, np.stack([law.samples_signed, law.samples_unsigned]))
            out.write_bytes("samples.npy", buf.getvalue())
    if cfg["emit_plot_data"]:
        grid = parse_grid(cfg["t_grid"]) if cfg["t_grid"] else default_t_grid(model.sigma_max)
        rows = batteries.envelope_plot_rows(model, law, grid)
        out.write_text("plot_data.csv", _csv_text(rows))
    return EXIT_OK


def _write_report(out: Outputs, report: VerificationReport, payload: dict) -> None:
    # verification always emits both: JSON carries the extras, CSV one row per check
    out.write_text("results.json", _dumps(payload))
    out.write_text("results.csv", report.to_csv())


def run_verify(cfg: dict, out: Outputs, workers: int) -> int:
    if cfg["battery"]:
        seed = batteries.DEFAULT_SEED if cfg["seed"] is None else cfg["seed"]
        n = batteries.DEFAULT_N if cfg["n_samples"] is None else cfg["n_samples"]
        cfg["resolved"] = {"battery": cfg["battery"], "seed": seed, "n_samples": n, "z": cfg["z"]}
        try:
            result = batteries.run_battery(cfg["battery"], seed, n, workers, cfg["z"], cfg["emit_plot_data"])
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        _write_report(out, result.report, result.to_dict())
        for label, rows in sorted(result.plot_data.items()):
            safe = "".join(ch if ch.isalnum() or ch in "-_=." else "_" for ch in label)
            out.write_text(f"plot_{safe}.csv", _csv_text(rows))
        return EXIT_OK if result.passed else EXIT_FAIL
    doc = _load_json(cfg, "verify")
    models = doc.get("models")
    if not isinstance(models, list) or not models:
        raise ConfigError("verify: field 'models' must be a nonempty list of covariance specs (or use --battery)")
    specs, built = [], []
    for k, m in enumerate(models):
        try:
            specs.append(load_spec(m))
            built.append(build(specs[-1]))
        except (DomainError, ModelError) as exc:
            raise ConfigError(f"field 'models[{k}]': {exc}") from None
        if built[-1].p < 3:
            raise ConfigError(f"field 'models[{k}]': verification needs p >= 3")
    scfg = _sample_config(cfg, doc)
    cfg["resolved"] = {"models": [s.to_dict() for s in specs], **scfg.to_dict(), "z": cfg["z"]}
    report = VerificationReport(z=cfg["z"], name="custom")
    laws = {}
    for k, model in enumerate(built):
        law = sample_maxima(model, SampleConfig(scfg.n_samples, batteries.derived_seed(scfg.seed, 10, k)), workers)
        report.extend(batteries.model_checks(model, law, cfg["z"]))
        laws[model.label] = law.summary()
    payload = report.to_dict()
    payload["data"] = {"laws": laws}
    _write_report(out, report, payload)
    return EXIT_OK if report.passed else EXIT_FAIL


def _multipliers(doc: dict) -> bs.MultiplierSpec:
    m = doc.get("multipliers", {"family": "rademacher"})
    try:
        return bs.MultiplierSpec(m.get("family", "rademacher"), float(m.get("b", 1.0)))
    except (DomainError, AttributeError) as exc:
        raise ConfigError(f"field 'multipliers': {exc}") from None


def run_bootstrap(cfg: dict, out: Outputs, workers: int) -> int:
    if cfg["battery"]:
        if cfg["battery"] != "bootstrap-size":
            raise ConfigError("bootstrap: only the 'bootstrap-size' battery applies here")
        return run_verify(cfg, out, workers)
    doc = _load_json(cfg, "bootstrap")
    spec = _covariance(doc)
    model = build(spec)
    try:
        dgm = bs.DataGenModel(model, doc.get("family", "centered_exponential"), float(doc.get("shape", 2.0)),
                              doc.get("heterogeneity", "none"))
        n = int(doc.get("n", 400))
        reps_outer = int(doc.get("reps_outer", 2000))
        reps_inner = int(doc.get("reps_inner", 500))
        alpha = doc.get("alpha", [0.1])
        alphas = [float(a) for a in (alpha if isinstance(alpha, list) else [alpha])]
        experiment = doc.get("experiment", "size")
        if experiment not in ("size", "clt"):
            raise DomainError(f"field 'experiment' must be 'size' or 'clt', got {experiment!r}")
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"bootstrap: {exc}") from None
    seed = cfg["seed"] if cfg["seed"] is not None else int(doc.get("seed", 0))
    n_ref = cfg["n_samples"] if cfg["n_samples"] is not None else int(doc.get("n_samples", 1_000_000))
    mult = _multipliers(doc)
    cfg["resolved"] = {"model": spec.to_dict(), "family": dgm.family, "heterogeneity": dgm.heterogeneity,
                       "n": n, "alpha": alphas, "reps_outer": reps_outer, "reps_inner": reps_inner,
                       "experiment": experiment, "seed": seed, "n_samples": n_ref,
                       "multipliers": {"family": mult.family, "b": mult.b}}
    try:
        ref = sample_maxima(model, SampleConfig(n_ref, batteries.derived_seed(seed, 60)), workers)
        if experiment == "size":
            res = bs.bootstrap_size_simulation(dgm, n, alphas, reps_outer, reps_inner, seed=seed,
                                               multipliers=mult, workers=workers, reference=ref).to_dict()
        else:
            res = bs.clt_experiment(dgm, n, reps_outer, seed=seed, workers=workers, reference=ref).to_dict()
    except DomainError as exc:
        raise ConfigError(f"bootstrap: {exc}") from None
    rate = res.pop("rate")
    payload = {"schema_version": SCHEMA_VERSION, "experiment": experiment, "results": res, "rate_context": rate}
    if cfg["format"] == "csv":
        if experiment == "size":
            rows = [{"schema_version": SCHEMA_VERSION, "alpha": a, "rejection_rate": r, "std_error": s}
                    for a, r, s in zip(res["alphas"], res["rejection_rates"], res["std_errors"])]
        else:
            rows = [{"schema_version": SCHEMA_VERSION, "q": q, "t_q": t, "probability": pr, "discrepancy": d}
                    for q, t, pr, d in zip(res["q_grid"], res["t_q"], res["probabilities"], res["discrepancies"])]
        out.write_text("results.csv", _csv_text(rows))
        out.write_text("rate_context.json", _dumps(rate))
    else:
        out.write_text("results.json", _dumps(payload))
    return EXIT_OK


def run_report(cfg: dict, out: Outputs) -> int:
    source = Path(cfg["spec"]) if cfg["spec"] else out.dir / "results.json"
    try:
        doc = json.loads(source.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"report: cannot read results from {source}: {exc}") from None
    checks = doc.get("checks")
    if not isinstance(checks, list):
        raise ConfigError(f"report: {source} holds no verification checks")
    groups: dict[str, dict] = {}
    for c in checks:
        g = groups.setdefault(c["name"], {"name": c["name"], "n": 0, "failed": 0, "inapplicable": 0,
                                          "min_margin": math.inf})
        g["n"] += 1
        if c["status"] == "fail":
            g["failed"] += 1
        if c["status"] == "inapplicable":
            g["inapplicable"] += 1
        elif c.get("margin") is not None:
            g["min_margin"] = min(g["min_margin"], float(c["margin"]))
    rows = [{"schema_version": SCHEMA_VERSION, **g} for g in sorted(groups.values(), key=lambda g: g["name"])]
    cfg["resolved"] = {"source": str(source)}
    out.write_text("report.csv", _csv_text(rows))
    for r in rows:
        print(f"{r['name']:<45} n={r['n']:<6} failed={r['failed']:<4} min_margin={r['min_margin']:.4g}")
    return EXIT_OK if all(r["failed"] == 0 for r in rows) else EXIT_FAIL


def _config_from_args(args: argparse.Namespace) -> dict:
    return {
        "subcommand": args.subcommand,
        "spec": args.spec,
        "seed": args.seed,
        "n_samples": args.n_samples,
        "format": args.format,
        "z": args.z,
        "battery": args.battery,
        "t_grid": args.t_grid,
        "export_samples": args.export_samples,
        "emit_plot_data": args.emit_plot_data,
    }


def _config_from_manifest(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = dict(doc["config"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"--from-manifest: cannot read manifest {path}: {exc}") from None
    cfg.pop("resolved", None)
    return cfg


def run(cfg: dict, out_dir: str | Path, workers: int | None = None) -> int:
    """Execute one resolved configuration and write its artifacts."""
    workers = workers or default_workers()
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    out = Outputs(out_path)
    started = datetime.now(timezone.utc).isoformat()
    sub = cfg["subcommand"]
    if sub == "bounds":
        code = run_bounds(cfg, out)
    elif sub == "sample":
        code = run_sample(cfg, out, workers)
    elif sub == "verify":
        code = run_verify(cfg, out, workers)
    elif sub == "bootstrap":
        code = run_bootstrap(cfg, out, workers)
    elif sub == "report":
        code = run_report(cfg, out)
    else:
        raise ConfigError(f"unknown subcommand {sub!r}")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool": "gaussmax",
        "version": __version__,
        "config": cfg,
        "outputs": dict(sorted(out.files.items())),
        "exit_code": code,
        "runtime": {"started": started, "finished": datetime.now(timezone.utc).isoformat(), "workers": workers},
    }
    (out_path / "manifest.json").write_text(_dumps(manifest), encoding="utf-8")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    workers = args.workers
    if workers is not None and workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if not (math.isfinite(args.z) and args.z >= 0):
        print("error: --z must be a nonnegative number", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _config_from_manifest(args.from_manifest) if args.from_manifest else _config_from_args(args)
        return run(cfg, args.out_dir, workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
