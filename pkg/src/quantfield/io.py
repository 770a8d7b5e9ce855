"""File formats and run-configuration handling.

Fields travel as `i,j,value,observed` CSV in row-major site order; batch
queries and results as flat CSV; configs as JSON validated against strict
schemas (unknown keys rejected). Floats are written with shortest
round-trip repr so files are byte-stable across runs.
"""

from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .errors import ConfigError
from .field_sim import FieldOnGrid, GridRegion, GrfSpec
from .predictor import (
    ExperimentReport,
    IntervalSpec,
    ReplicationConfig,
    ReplicationResult,
    VicinityShape,
)

# ---------------------------------------------------------------------------
# field CSV


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return repr(float(x))


def write_field_csv(path, field: FieldOnGrid, targets=None) -> None:
    """Write one row per site; adds an is_target column when targets given."""
    target_idx = set()
    if targets is not None:
        target_idx = {field.region.site_index(s) for s in targets}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["i", "j", "value", "observed"]
        if targets is not None:
            header.append("is_target")
        writer.writerow(header)
        for idx, (i, j) in enumerate(field.region.sites()):
            row = [str(i), str(j), _fmt(field.values[idx]), str(int(field.mask[idx]))]
            if targets is not None:
                row.append(str(int(idx in target_idx)))
            writer.writerow(row)


def read_field_csv(path) -> tuple[FieldOnGrid, tuple[tuple[int, int], ...]]:
    """Read a field CSV back; returns the field and any flagged target sites."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["i", "j", "value", "observed"]:
            raise ConfigError(f"{path}: expected header i,j,value,observed")
        has_targets = len(header) > 4 and header[4] == "is_target"
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    try:
        i = np.array([int(r[0]) for r in rows])
        j = np.array([int(r[1]) for r in rows])
        values = np.array([float(r[2]) for r in rows])
        observed = np.array([bool(int(r[3])) for r in rows])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed field row ({exc})") from exc
    region = GridRegion(int(i.max()), int(j.max()))
    if len(rows) != region.n_sites:
        raise ConfigError(
            f"{path}: {len(rows)} rows do not cover a complete {region.n1}x{region.n2} grid"
        )
    expected = region.sites()
    if not (np.array_equal(i, expected[:, 0]) and np.array_equal(j, expected[:, 1])):
        raise ConfigError(f"{path}: sites are not in row-major order")
    targets: tuple[tuple[int, int], ...] = ()
    if has_targets:
        flags = np.array([bool(int(r[4])) for r in rows])
        targets = tuple((int(a), int(b)) for a, b in expected[flags])
    return FieldOnGrid(region, values, observed), targets


# ---------------------------------------------------------------------------
# query / result CSV


def read_query_csv(path):
    """Read x_1..x_d[,y][,p] rows; returns (X, y-or-None, p-or-None)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ConfigError(f"{path}: empty query file")
        cols = [c.strip() for c in header]
        d = sum(1 for c in cols if c.startswith("x_"))
        expected = [f"x_{k}" for k in range(1, d + 1)]
        extras = cols[d:]
        if d == 0 or cols[:d] != expected or any(c not in ("y", "p") for c in extras) or len(set(extras)) != len(extras):
            raise ConfigError(f"{path}: expected header x_1,...,x_d[,y][,p], got {cols}")
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: no query rows")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed query row ({exc})") from exc
    if data.shape[1] != len(cols):
        raise ConfigError(f"{path}: ragged query rows")
    X = data[:, :d]
    y = data[:, cols.index("y")] if "y" in cols else None
    p = data[:, cols.index("p")] if "p" in cols else None
    return X, y, p


def write_results_csv(path, rows) -> None:
    """Write (query_id, quantity, value-or-None, error_code-or-None) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "quantity", "value", "error_code"])
        for query_id, quantity, value, error_code in rows:
            writer.writerow(
                [
                    str(query_id),
                    quantity,
                    "" if value is None else _fmt(value),
                    "" if error_code is None else error_code,
                ]
            )


# ---------------------------------------------------------------------------
# config schemas

_GRF_PROPS = {
    "mean": {"type": "number"},
    "variance": {"type": "number", "exclusiveMinimum": 0},
    "scale": {"type": "number", "exclusiveMinimum": 0},
    "jitter": {"type": "number", "minimum": 0},
}

_GRF_SCHEMA = {
    "type": "object",
    "properties": _GRF_PROPS,
    "required": ["mean", "variance", "scale"],
    "additionalProperties": False,
}

_GRID_SCHEMA = {
    "type": "object",
    "properties": {
        "n1": {"type": "integer", "minimum": 1},
        "n2": {"type": "integer", "minimum": 1},
    },
    "required": ["n1", "n2"],
    "additionalProperties": False,
}

_MASK_SCHEMA = {
    "type": "object",
    "properties": {
        "side": {"type": "integer", "minimum": 1},
        "tail": {"type": "integer", "minimum": 0},
    },
    "required": ["side", "tail"],
    "additionalProperties": False,
}

_SITE_SCHEMA = {
    "type": "array",
    "items": {"type": "integer"},
    "minItems": 2,
    "maxItems": 2,
}

_VICINITY_SCHEMA = {
    "oneOf": [
        {"enum": ["small", "large"]},
        {"type": "array", "items": _SITE_SCHEMA, "minItems": 1},
    ]
}

_INTERVAL_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "predictive"},
                "p_low": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "p_high": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
            "required": ["kind", "p_low", "p_high"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "asymptotic"},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
            "required": ["kind", "alpha"],
            "additionalProperties": False,
        },
    ]
}

_ESTIMATOR_SCHEMA = {
    "type": "object",
    "properties": {
        "bandwidth": {
            "oneOf": [{"const": "auto"}, {"type": "number", "exclusiveMinimum": 0}]
        },
        "bw_grid": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "properties": {
                        "lo": {"type": "number", "exclusiveMinimum": 0},
                        "hi": {"type": "number", "exclusiveMinimum": 0},
                        "count": {"type": "integer", "minimum": 1},
                    },
                    "required": ["lo", "hi", "count"],
                    "additionalProperties": False,
                },
            ]
        },
        "kernel_x": {"enum": ["gaussian", "epanechnikov"]},
        "kernel_y": {"enum": ["gaussian", "epanechnikov"]},
        "root_tol": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-3},
        "mass_threshold": {
            "oneOf": [{"type": "null"}, {"type": "number", "exclusiveMinimum": 0}]
        },
    },
    "additionalProperties": False,
}

SIMULATE_SCHEMA = {
    "type": "object",
    "properties": {
        "grid": _GRID_SCHEMA,
        "mask": _MASK_SCHEMA,
        "field": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {"kind": {"const": "grf"}, "seed": {"type": "integer"}, **_GRF_PROPS},
                    "required": ["kind", "seed", "mean", "variance", "scale"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "kind": {"const": "model"},
                        "seed_x": {"type": "integer"},
                        "seed_z": {"type": "integer"},
                        "grf_x": _GRF_SCHEMA,
                        "grf_z": _GRF_SCHEMA,
                    },
                    "required": ["kind", "seed_x", "seed_z"],
                    "additionalProperties": False,
                },
            ]
        },
        "targets": {"type": "array", "items": _SITE_SCHEMA},
    },
    "required": ["grid", "field"],
    "additionalProperties": False,
}

ESTIMATE_SCHEMA = {
    "type": "object",
    "properties": {
        "estimator": _ESTIMATOR_SCHEMA,
        "vicinity": _VICINITY_SCHEMA,
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
    "additionalProperties": False,
}

PREDICT_SCHEMA = {
    "type": "object",
    "properties": {
        "vicinity": _VICINITY_SCHEMA,
        "targets": {"type": "array", "items": _SITE_SCHEMA, "minItems": 1},
        "quantiles": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "minItems": 1,
        },
        "interval": _INTERVAL_SCHEMA,
        "estimator": _ESTIMATOR_SCHEMA,
    },
    "required": ["vicinity", "targets", "quantiles"],
    "additionalProperties": False,
}

REPLICATE_SCHEMA = {
    "type": "object",
    "properties": {
        "grid": _GRID_SCHEMA,
        "mask": _MASK_SCHEMA,
        "grf_x": _GRF_SCHEMA,
        "grf_z": _GRF_SCHEMA,
        "seeds": {
            "type": "object",
            "properties": {
                "x": {"type": "integer"},
                "z": {"type": "integer"},
                "count": {"type": "integer", "minimum": 1},
            },
            "required": ["x", "z"],
            "additionalProperties": False,
        },
        "vicinity": _VICINITY_SCHEMA,
        "targets": {"type": "array", "items": _SITE_SCHEMA, "minItems": 1},
        "quantiles": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "minItems": 1,
        },
        "interval": _INTERVAL_SCHEMA,
        "estimator": _ESTIMATOR_SCHEMA,
    },
    "required": ["grid", "mask", "grf_x", "grf_z", "seeds", "vicinity", "targets", "quantiles"],
    "additionalProperties": False,
}


def validate_config(document: dict, schema: dict, name: str) -> None:
    validator = Draft202012Validator(schema)
    problems = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if problems:
        lines = [f"{name} config invalid:"]
        for err in problems:
            where = "/".join(str(p) for p in err.absolute_path) or "<root>"
            lines.append(f"  at {where}: {err.message}")
        raise ConfigError("\n".join(lines))


def load_config(path, schema: dict, name: str) -> dict:
    try:
        with open(path) as fh:
            document = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    validate_config(document, schema, name)
    return document


def default_replication_config() -> dict:
    """The shipped end-to-end experiment configuration."""
    text = resources.files("quantfield.configs").joinpath("replication.json").read_text()
    document = json.loads(text)
    validate_config(document, REPLICATE_SCHEMA, "replicate")
    return document


# ---------------------------------------------------------------------------
# config -> objects


def parse_vicinity(value) -> VicinityShape:
    if value == "small":
        return VicinityShape.small()
    if value == "large":
        return VicinityShape.large()
    return VicinityShape(tuple((int(a), int(b)) for a, b in value))


def parse_interval(value) -> IntervalSpec | None:
    if value is None:
        return None
    if value["kind"] == "predictive":
        return IntervalSpec(kind="predictive", p_low=value["p_low"], p_high=value["p_high"])
    return IntervalSpec(kind="asymptotic", alpha=value["alpha"], center_p=value.get("p", 0.5))


def parse_grf(value) -> GrfSpec:
    return GrfSpec(
        mean=value["mean"],
        variance=value["variance"],
        scale=value["scale"],
        jitter=value.get("jitter", 0.0),
    )


def parse_bw_grid(value) -> tuple[float, ...] | None:
    if value is None:
        return None
    return tuple(np.geomspace(value["lo"], value["hi"], value["count"]))


def parse_replication_config(document: dict, threads: int = 1) -> ReplicationConfig:
    est = document.get("estimator", {})
    return ReplicationConfig(
        region=GridRegion(document["grid"]["n1"], document["grid"]["n2"]),
        mask_side=document["mask"]["side"],
        mask_tail=document["mask"]["tail"],
        spec_x=parse_grf(document["grf_x"]),
        spec_z=parse_grf(document["grf_z"]),
        seed_x=document["seeds"]["x"],
        seed_z=document["seeds"]["z"],
        n_seeds=document["seeds"].get("count", 1),
        vicinity=parse_vicinity(document["vicinity"]),
        targets=tuple((int(a), int(b)) for a, b in document["targets"]),
        quantiles=tuple(float(p) for p in document["quantiles"]),
        interval=parse_interval(document.get("interval")),
        bandwidth=est.get("bandwidth", "auto"),
        bw_grid=parse_bw_grid(est.get("bw_grid")),
        kernel_x=est.get("kernel_x", "gaussian"),
        kernel_y=est.get("kernel_y", "epanechnikov"),
        root_tol=est.get("root_tol", 1e-8),
        mass_threshold=est.get("mass_threshold"),
        threads=threads,
    )


# ---------------------------------------------------------------------------
# report serialization


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "targets": [
            {
                "site": list(row.site),
                "truth": row.truth,
                "predictions": {str(p): row.predictions[p] for p in sorted(row.predictions)},
                "errors": {str(p): row.errors[p] for p in sorted(row.errors)},
                "interval": list(row.interval) if row.interval is not None else None,
                "interval_error": row.interval_error,
            }
            for row in report.rows
        ],
        "mae": {str(p): report.mae[p] for p in sorted(report.mae)},
        "failed": {str(p): report.failed[p] for p in sorted(report.failed)},
        "interval_kind": report.interval_kind,
        "contained_count": report.contained_count,
        "average_interval_length": report.average_interval_length,
        "meta": _jsonable(report.meta),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def replication_to_dict(result: ReplicationResult, config_echo: dict) -> dict:
    return {
        "config": _jsonable(config_echo),
        "seeds": [list(s) for s in result.seeds],
        "aggregate": _jsonable(
            {
                **result.aggregate,
                "median_mae": {str(p): v for p, v in result.aggregate["median_mae"].items()},
                "failed_targets": {str(p): v for p, v in result.aggregate["failed_targets"].items()},
            }
        ),
        "runs": [report_to_dict(r) for r in result.reports],
    }


def write_json(path, document: dict) -> None:
    with open(path, "w") as fh:
        json.dump(document, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table_csv(path, report: ExperimentReport, quantiles) -> None:
    """Per-target predictions next to the truth, one block per level set."""
    qs = sorted(quantiles)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["target_i", "target_j"]
        for p in qs:
            if p == 0.5:
                header.append("truth")
            header.append(f"p{p:g}")
        if 0.5 not in qs:
            header.insert(2, "truth")
        writer.writerow(header)
        for row in report.rows:
            cells = [str(row.site[0]), str(row.site[1])]
            for p in qs:
                if p == 0.5:
                    cells.append(_fmt(row.truth))
                value = row.predictions.get(p)
                cells.append("" if value is None else _fmt(value))
            if 0.5 not in qs:
                cells.insert(2, _fmt(row.truth))
            writer.writerow(cells)
        mae_cells = ["MAE", ""]
        for p in qs:
            if p == 0.5:
                mae_cells.append("")
            value = report.mae.get(p)
            mae_cells.append("" if value is None else _fmt(value))
        if 0.5 not in qs:
            mae_cells.insert(2, "")
        writer.writerow(mae_cells)
