"""Command-line surface: simulate, estimate, predict, replicate.

Exit codes: 0 on success, 2 for configuration or usage problems, 3 for
numerical failures. Numerical failures also emit a machine-readable error
JSON on stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as qio
from .bandwidth import default_grid, h_mean_cv, yu_jones
from .errors import ConfigError, QuantFieldError
from .estimator import (
    EstimatorConfig,
    Sample,
    cond_cdf,
    cond_density,
    cond_quantile,
    confidence_interval,
)
from .errors import BracketError, NoMassError, ZeroDensityError
from .field_sim import FieldOnGrid, GridRegion, GrfSpec, observation_mask, simulate_grf, simulate_model
from .kernels import KernelSpec
from .predictor import (
    PredictionTask,
    build_training,
    carve_targets,
    predict as run_predict,
    run_replication,
)
from . import plots


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("--config", type=Path, required=config_required, help="JSON run configuration")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed(s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantfield", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a field and write it as CSV")
    _add_common(p_sim)

    p_est = sub.add_parser("estimate", help="batch conditional estimates at query points")
    _add_common(p_est)
    p_est.add_argument("--data", type=Path, required=True, help="field CSV or sample CSV")
    p_est.add_argument("--queries", type=Path, required=True, help="query CSV x_1..x_d[,y][,p]")
    p_est.add_argument("--bandwidth", default=None, help="auto or a positive number")
    p_est.add_argument("--bw-grid", default=None, help="lo:hi:count for the CV grid")

    p_pred = sub.add_parser("predict", help="predict unobserved sites of a field CSV")
    _add_common(p_pred)
    p_pred.add_argument("--data", type=Path, required=True, help="field CSV")
    p_pred.add_argument("--bandwidth", default=None, help="auto or a positive number")
    p_pred.add_argument("--bw-grid", default=None, help="lo:hi:count for the CV grid")
    p_pred.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p_rep = sub.add_parser("replicate", help="run the full simulated prediction experiment")
    _add_common(p_rep, config_required=False)
    p_rep.add_argument("--seeds", type=int, default=None, help="number of seed pairs to sweep")
    p_rep.add_argument("--vicinity", choices=["small", "large"], default=None)
    p_rep.add_argument("--bandwidth", default=None, help="auto or a positive number")
    p_rep.add_argument("--bw-grid", default=None, help="lo:hi:count for the CV grid")
    p_rep.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    return parser


def _parse_bandwidth(value):
    if value is None:
        return None
    if value == "auto":
        return "auto"
    try:
        h = float(value)
    except ValueError as exc:
        raise ConfigError(f"--bandwidth must be 'auto' or a number, got {value!r}") from exc
    if h <= 0:
        raise ConfigError(f"--bandwidth must be positive, got {h}")
    return h


def _parse_bw_grid(value):
    if value is None:
        return None
    parts = value.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--bw-grid must look like lo:hi:count, got {value!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"--bw-grid must look like lo:hi:count, got {value!r}") from exc
    if lo <= 0 or hi <= lo or count < 1:
        raise ConfigError(f"--bw-grid needs 0 < lo < hi and count >= 1, got {value!r}")
    return tuple(np.geomspace(lo, hi, count))


def _estimator_config(document: dict, d: int, bandwidth: float) -> EstimatorConfig:
    return EstimatorConfig(
        bandwidth=bandwidth,
        kernel_x=KernelSpec(document.get("kernel_x", "gaussian"), d),
        kernel_y=KernelSpec(document.get("kernel_y", "epanechnikov"), 1),
        mass_threshold=document.get("mass_threshold"),
        root_tol=document.get("root_tol", 1e-8),
    )


def _resolve_bandwidth(spec, sample: Sample, est_doc: dict, bw_grid):
    """Returns (h_mean, cv_curve-or-None); cv_curve present only for auto."""
    if spec != "auto":
        return float(spec), None
    grid = bw_grid if bw_grid is not None else qio.parse_bw_grid(est_doc.get("bw_grid")) or default_grid(sample)
    probe = _estimator_config(est_doc, sample.d, 1.0)
    return h_mean_cv(sample, grid, probe)


def _write_bandwidth_report(out, h_mean, curve, quantiles=()) -> None:
    if curve is None:
        return
    qio.write_json(
        out / "bandwidth.json",
        {
            "h_mean": h_mean,
            "h_p": {str(p): yu_jones(h_mean, float(p)) for p in quantiles},
            "cv_curve": [[h, score] for h, score in curve],
        },
    )


def cmd_simulate(args) -> int:
    document = qio.load_config(args.config, qio.SIMULATE_SCHEMA, "simulate")
    region = GridRegion(document["grid"]["n1"], document["grid"]["n2"])
    mask_doc = document.get("mask", {"side": 21, "tail": 15})
    field_doc = document["field"]
    seed_override = args.seed
    metadata = {"grid": document["grid"], "mask": dict(mask_doc)}
    if field_doc["kind"] == "grf":
        seed = seed_override if seed_override is not None else field_doc["seed"]
        spec = qio.parse_grf({k: field_doc[k] for k in ("mean", "variance", "scale") } | {"jitter": field_doc.get("jitter", 0.0)})
        raw = simulate_grf(spec, region, seed)
        mask = observation_mask(region, mask_doc["side"], mask_doc["tail"])
        field = FieldOnGrid(region, raw.values, mask)
        metadata["field"] = {"kind": "grf", "seed": seed, "mean": spec.mean, "variance": spec.variance, "scale": spec.scale, "jitter": spec.jitter}
    else:
        seed_x = seed_override if seed_override is not None else field_doc["seed_x"]
        seed_z = field_doc["seed_z"] if seed_override is None else seed_override + 7919
        spec_x = qio.parse_grf(field_doc.get("grf_x", {"mean": 0.0, "variance": 5.0, "scale": 3.0}))
        spec_z = qio.parse_grf(field_doc.get("grf_z", {"mean": 0.0, "variance": 0.1, "scale": 5.0}))
        _, field = simulate_model(
            region, seed_x, seed_z, spec_x=spec_x, spec_z=spec_z,
            mask_side=mask_doc["side"], mask_tail=mask_doc["tail"],
        )
        metadata["field"] = {
            "kind": "model", "seed_x": seed_x, "seed_z": seed_z,
            "grf_x": {"mean": spec_x.mean, "variance": spec_x.variance, "scale": spec_x.scale, "jitter": spec_x.jitter},
            "grf_z": {"mean": spec_z.mean, "variance": spec_z.variance, "scale": spec_z.scale, "jitter": spec_z.jitter},
        }
    targets = tuple((int(a), int(b)) for a, b in document.get("targets", []))
    if targets:
        field = carve_targets(field, targets)
        metadata["targets"] = [list(t) for t in targets]
    metadata["mask"]["observed_count"] = int(field.mask.sum())

    args.out.mkdir(parents=True, exist_ok=True)
    qio.write_field_csv(args.out / "field.csv", field, targets=targets if targets else None)
    qio.write_json(args.out / "field_meta.json", metadata)
    print(f"wrote {args.out / 'field.csv'} ({field.region.n_sites} sites, {int(field.mask.sum())} observed)")
    return 0


def _load_sample(path, est_doc: dict):
    """A field CSV plus vicinity, or a plain x_1..x_d,y sample CSV."""
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    if header[:4] == ["i", "j", "value", "observed"]:
        field, _ = qio.read_field_csv(path)
        vicinity = est_doc.get("vicinity")
        if vicinity is None:
            raise ConfigError("estimating from a field CSV requires a vicinity in the config")
        return build_training(field, qio.parse_vicinity(vicinity))
    X, y, _ = read_sample_csv(path)
    return Sample(X, y)


def read_sample_csv(path):
    import csv as _csv

    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ConfigError(f"{path}: empty sample file")
        d = sum(1 for c in header if c.startswith("x_"))
        if d == 0 or header[:d] != [f"x_{k}" for k in range(1, d + 1)] or header[d:] != ["y"]:
            raise ConfigError(f"{path}: expected header x_1,...,x_d,y")
        rows = list(reader)
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed sample row ({exc})") from exc
    return data[:, :d], data[:, d], None


def cmd_estimate(args) -> int:
    document = qio.load_config(args.config, qio.ESTIMATE_SCHEMA, "estimate")
    est_doc = dict(document.get("estimator", {}))
    if "vicinity" in document:
        est_doc["vicinity"] = document["vicinity"]
    sample = _load_sample(args.data, est_doc)
    X, y, p = qio.read_query_csv(args.queries)
    if X.shape[1] != sample.d:
        raise ConfigError(f"query dimension {X.shape[1]} does not match sample dimension {sample.d}")

    bw_flag = _parse_bandwidth(args.bandwidth)
    bw_grid = _parse_bw_grid(getattr(args, "bw_grid", None))
    bandwidth_spec = bw_flag if bw_flag is not None else est_doc.get("bandwidth", "auto")
    h, cv_curve = _resolve_bandwidth(bandwidth_spec, sample, est_doc, bw_grid)
    cfg = _estimator_config(est_doc, sample.d, h)
    alpha = document.get("alpha")

    rows = []
    for qid in range(X.shape[0]):
        x = X[qid]
        if y is not None:
            for quantity, fn in (("cdf", cond_cdf), ("density", cond_density)):
                try:
                    rows.append((qid, quantity, fn(sample, x, float(y[qid]), cfg), None))
                except NoMassError:
                    rows.append((qid, quantity, None, "no_mass"))
        if p is not None:
            try:
                rows.append((qid, "quantile", cond_quantile(sample, x, float(p[qid]), cfg).value, None))
            except NoMassError:
                rows.append((qid, "quantile", None, "no_mass"))
            except BracketError:
                rows.append((qid, "quantile", None, "bracket_failure"))
            if alpha is not None:
                try:
                    res = confidence_interval(sample, x, float(p[qid]), alpha, cfg)
                    rows.append((qid, "interval_lower", res.lower, None))
                    rows.append((qid, "interval_upper", res.upper, None))
                except NoMassError:
                    rows.append((qid, "interval_lower", None, "no_mass"))
                    rows.append((qid, "interval_upper", None, "no_mass"))
                except BracketError:
                    rows.append((qid, "interval_lower", None, "bracket_failure"))
                    rows.append((qid, "interval_upper", None, "bracket_failure"))
                except ZeroDensityError:
                    rows.append((qid, "interval_lower", None, "zero_density"))
                    rows.append((qid, "interval_upper", None, "zero_density"))

    args.out.mkdir(parents=True, exist_ok=True)
    qio.write_results_csv(args.out / "estimates.csv", rows)
    qio.write_json(args.out / "estimate_meta.json", {"bandwidth": h, "n": sample.n, "d": sample.d})
    _write_bandwidth_report(args.out, h, cv_curve)
    print(f"wrote {args.out / 'estimates.csv'} ({len(rows)} rows, bandwidth {h:g})")
    return 0


def cmd_predict(args) -> int:
    document = qio.load_config(args.config, qio.PREDICT_SCHEMA, "predict")
    field, flagged = qio.read_field_csv(args.data)
    targets = tuple((int(a), int(b)) for a, b in document["targets"]) or flagged
    task = PredictionTask(
        vicinity=qio.parse_vicinity(document["vicinity"]),
        targets=targets,
        quantiles=tuple(float(q) for q in document["quantiles"]),
        interval=qio.parse_interval(document.get("interval")),
    )
    sample = build_training(field, task.vicinity)
    est_doc = document.get("estimator", {})
    bw_flag = _parse_bandwidth(args.bandwidth)
    bw_grid = _parse_bw_grid(args.bw_grid)
    bandwidth_spec = bw_flag if bw_flag is not None else est_doc.get("bandwidth", "auto")
    h_mean, cv_curve = _resolve_bandwidth(bandwidth_spec, sample, est_doc, bw_grid)
    cfg = _estimator_config(est_doc, sample.d, h_mean)
    report = run_predict(field, task, cfg, threads=max(1, args.threads))

    args.out.mkdir(parents=True, exist_ok=True)
    _write_bandwidth_report(args.out, h_mean, cv_curve, task.quantiles)
    qio.write_json(args.out / "report.json", qio.report_to_dict(report))
    qio.write_table_csv(args.out / "predictions.csv", report, task.quantiles)
    qio.write_field_csv(args.out / "plot_data.csv", field, targets=task.targets)
    if not args.no_figures:
        plots.save_field_figure(args.out / "field.png", field, task.targets)
        plots.save_interval_figure(args.out / "intervals.png", report)
    print(f"wrote {args.out / 'report.json'}")
    return 0


def cmd_replicate(args) -> int:
    if args.config is not None:
        document = qio.load_config(args.config, qio.REPLICATE_SCHEMA, "replicate")
    else:
        document = qio.default_replication_config()
    if args.seed is not None:
        document["seeds"]["x"] = args.seed
        document["seeds"]["z"] = args.seed + 7919
    if args.seeds is not None:
        document["seeds"]["count"] = args.seeds
    if args.vicinity is not None:
        document["vicinity"] = args.vicinity
    est_doc = document.setdefault("estimator", {})
    bw_flag = _parse_bandwidth(args.bandwidth)
    if bw_flag is not None:
        est_doc["bandwidth"] = bw_flag
    bw_grid = _parse_bw_grid(args.bw_grid)
    if bw_grid is not None:
        est_doc["bw_grid"] = {"lo": float(bw_grid[0]), "hi": float(bw_grid[-1]), "count": len(bw_grid)}
    qio.validate_config(document, qio.REPLICATE_SCHEMA, "replicate")

    config = qio.parse_replication_config(document, threads=max(1, args.threads))
    result = run_replication(config)

    args.out.mkdir(parents=True, exist_ok=True)
    qio.write_json(args.out / "report.json", qio.replication_to_dict(result, document))
    qio.write_table_csv(args.out / "table.csv", result.reports[0], config.quantiles)
    qio.write_field_csv(args.out / "plot_data.csv", result.first_field, targets=config.targets)
    if not args.no_figures:
        plots.save_field_figure(args.out / "field.png", result.first_field, config.targets)
        plots.save_interval_figure(args.out / "intervals.png", result.reports[0])
    med = result.aggregate["median_mae"]
    summary = ", ".join(f"p={p:g}: {v:.4g}" for p, v in sorted(med.items()) if v is not None)
    print(f"wrote {args.out / 'report.json'} (median MAE {summary})")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "predict": cmd_predict,
    "replicate": cmd_replicate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QuantFieldError as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        return 3


if __name__ == "__main__":
    sys.exit(main())
