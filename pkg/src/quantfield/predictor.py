"""Spatial prediction at unobserved lattice sites.

A fixed vicinity of offsets turns the observed field into a regression
sample: the covariate at a site is the field restricted to its translated
vicinity, the response is the field value there. Unobserved targets with
fully observed vicinities are then predicted by conditional quantiles,
with per-level bandwidths from the quantile rescaling rule, and scored by
mean absolute error and interval coverage.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .bandwidth import default_grid, h_mean_cv, yu_jones
from .errors import BracketError, ConfigError, NoMassError, PredictionError, ZeroDensityError
from .estimator import (
    EstimatorConfig,
    IntervalResult,
    Sample,
    cond_quantile,
    confidence_interval,
)
from .field_sim import FieldOnGrid, GridRegion, GrfSpec, simulate_model
from .kernels import KernelSpec

SMALL_VICINITY = ((-1, -1), (-1, 1), (1, -1), (1, 1))
LARGE_VICINITY = tuple(
    (a, b) for a in (-2, -1, 1, 2) for b in (-2, -1, 1, 2)
)


@dataclass(frozen=True)
class VicinityShape:
    """Fixed set of lattice offsets defining the covariate window."""

    offsets: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        offsets = tuple((int(a), int(b)) for a, b in self.offsets)
        if not offsets:
            raise ValueError("vicinity must contain at least one offset")
        if (0, 0) in offsets:
            raise ValueError("vicinity must not contain the zero offset")
        if len(set(offsets)) != len(offsets):
            raise ValueError("vicinity offsets must be distinct")
        object.__setattr__(self, "offsets", tuple(sorted(offsets)))

    @property
    def d(self) -> int:
        return len(self.offsets)

    @classmethod
    def from_products(cls, rows, cols) -> "VicinityShape":
        return cls(tuple((a, b) for a in rows for b in cols))

    @classmethod
    def small(cls) -> "VicinityShape":
        return cls(SMALL_VICINITY)

    @classmethod
    def large(cls) -> "VicinityShape":
        return cls(LARGE_VICINITY)


@dataclass(frozen=True)
class IntervalSpec:
    """Which interval the prediction report carries."""

    kind: str  # "predictive" | "asymptotic"
    p_low: float = 0.05
    p_high: float = 0.95
    alpha: float = 0.1
    center_p: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("predictive", "asymptotic"):
            raise ValueError(f"interval kind must be predictive or asymptotic, got {self.kind!r}")
        if self.kind == "predictive" and not 0.0 < self.p_low < self.p_high < 1.0:
            raise ValueError(f"need 0 < p_low < p_high < 1, got ({self.p_low}, {self.p_high})")
        if self.kind == "asymptotic":
            if not 0.0 < self.alpha <= 1.0:
                raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
            if not 0.0 < self.center_p < 1.0:
                raise ValueError(f"center_p must lie in (0, 1), got {self.center_p}")


@dataclass(frozen=True)
class PredictionTask:
    """Targets, quantile levels, and optional interval for one experiment."""

    vicinity: VicinityShape
    targets: tuple[tuple[int, int], ...]
    quantiles: tuple[float, ...]
    interval: IntervalSpec | None = None

    def __post_init__(self) -> None:
        targets = tuple((int(i), int(j)) for i, j in self.targets)
        if not targets:
            raise ValueError("task needs at least one target site")
        if len(set(targets)) != len(targets):
            raise ValueError("target sites must be distinct")
        quantiles = tuple(float(p) for p in self.quantiles)
        if not quantiles or not all(0.0 < p < 1.0 for p in quantiles):
            raise ValueError("quantile levels must be a nonempty subset of (0, 1)")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "quantiles", quantiles)


@dataclass(frozen=True)
class TargetRow:
    """Per-target outcome: truth, per-level predictions, interval, errors."""

    site: tuple[int, int]
    truth: float
    predictions: dict[float, float | None]
    errors: dict[float, str]
    interval: tuple[float, float] | None = None
    interval_error: str | None = None


@dataclass(frozen=True)
class ExperimentReport:
    """Predictions and scores for one field and one prediction task."""

    rows: tuple[TargetRow, ...]
    mae: dict[float, float | None]
    failed: dict[float, int]
    interval_kind: str | None
    contained_count: int | None
    average_interval_length: float | None
    meta: dict = dataclass_field(default_factory=dict)


def vicinity_sites(i0, shape: VicinityShape) -> list[tuple[int, int]]:
    """The vicinity translated to a site, in canonical offset order."""
    i, j = int(i0[0]), int(i0[1])
    return [(i + a, j + b) for a, b in shape.offsets]


def vicinity_values(field: FieldOnGrid, i0, shape: VicinityShape) -> np.ndarray:
    """Field values over the vicinity of a site; all must be observed."""
    out = np.empty(shape.d)
    for k, site in enumerate(vicinity_sites(i0, shape)):
        if not field.region.contains(site) or not field.observed_at(site):
            raise ValueError(f"vicinity site {site} of target {tuple(i0)} is not observed")
        out[k] = field.value_at(site)
    return out


def build_training(field: FieldOnGrid, shape: VicinityShape) -> Sample:
    """One pair per observed site whose whole vicinity is inside and observed."""
    n1, n2 = field.region.n1, field.region.n2
    vals = field.value_grid()
    mask = field.mask_grid()
    ii, jj = np.meshgrid(np.arange(1, n1 + 1), np.arange(1, n2 + 1), indexing="ij")
    ok = mask.copy()
    cols = []
    for a, b in shape.offsets:
        si = ii + a
        sj = jj + b
        inside = (si >= 1) & (si <= n1) & (sj >= 1) & (sj <= n2)
        ci = np.clip(si, 1, n1) - 1
        cj = np.clip(sj, 1, n2) - 1
        ok &= inside & mask[ci, cj]
        cols.append(vals[ci, cj])
    keep = ok.ravel()
    if not keep.any():
        raise ConfigError("no observed site has a fully observed vicinity; training set is empty")
    X = np.stack([c.ravel()[keep] for c in cols], axis=1)
    y = vals.ravel()[keep]
    return Sample(X, y)


def mae(predictions, truth) -> float:
    """Mean absolute deviation between two equal-length vectors."""
    predictions = np.asarray(predictions, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predictions.shape != truth.shape or predictions.ndim != 1 or predictions.size == 0:
        raise ValueError("predictions and truth must be nonempty vectors of equal length")
    return float(np.mean(np.abs(predictions - truth)))


def _predict_target(field, sample, task, cfgs, i0) -> TargetRow:
    x = vicinity_values(field, i0, task.vicinity)
    truth = field.value_at(i0)
    predictions: dict[float, float | None] = {}
    errors: dict[float, str] = {}
    for p in task.quantiles:
        try:
            predictions[p] = cond_quantile(sample, x, p, cfgs[p]).value
        except NoMassError:
            predictions[p] = None
            errors[p] = "no_mass"
        except BracketError:
            predictions[p] = None
            errors[p] = "bracket_failure"
    interval = None
    interval_error = None
    spec = task.interval
    if spec is not None:
        try:
            if spec.kind == "predictive":
                lo = _quantile_at(sample, x, spec.p_low, cfgs, predictions)
                hi = _quantile_at(sample, x, spec.p_high, cfgs, predictions)
                interval = (lo, hi)
            else:
                cfg = cfgs.get(spec.center_p) or next(iter(cfgs.values()))
                res: IntervalResult = confidence_interval(sample, x, spec.center_p, spec.alpha, cfg)
                interval = (res.lower, res.upper)
        except NoMassError:
            interval_error = "no_mass"
        except BracketError:
            interval_error = "bracket_failure"
        except ZeroDensityError:
            interval_error = "zero_density"
    return TargetRow(
        site=(int(i0[0]), int(i0[1])),
        truth=truth,
        predictions=predictions,
        errors=errors,
        interval=interval,
        interval_error=interval_error,
    )


def _quantile_at(sample, x, p, cfgs, predictions) -> float:
    if predictions.get(p) is not None:
        return predictions[p]
    return cond_quantile(sample, x, p, cfgs[p]).value


def predict(
    field: FieldOnGrid,
    task: PredictionTask,
    cfg: EstimatorConfig,
    threads: int = 1,
) -> ExperimentReport:
    """Run the prediction task on an observed field.

    ``cfg.bandwidth`` is treated as the mean-regression bandwidth; each
    quantile level gets its own rescaled bandwidth. Targets must be
    unobserved and have fully observed vicinities. Per-target failures are
    recorded and excluded from the error summaries; if every target fails
    at every level the run fails.
    """
    for i0 in task.targets:
        if not field.region.contains(i0):
            raise ValueError(f"target {tuple(i0)} lies outside the region")
        if field.observed_at(i0):
            raise ValueError(f"target {tuple(i0)} is observed; targets must be unobserved")
        vicinity_values(field, i0, task.vicinity)

    sample = build_training(field, task.vicinity)
    levels = set(task.quantiles)
    if task.interval is not None and task.interval.kind == "predictive":
        levels |= {task.interval.p_low, task.interval.p_high}
    if task.interval is not None and task.interval.kind == "asymptotic":
        levels.add(task.interval.center_p)
    cfgs = {p: cfg.with_bandwidth(yu_jones(cfg.bandwidth, p)) for p in sorted(levels)}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = tuple(
                pool.map(lambda i0: _predict_target(field, sample, task, cfgs, i0), task.targets)
            )
    else:
        rows = tuple(_predict_target(field, sample, task, cfgs, i0) for i0 in task.targets)

    mae_by_p: dict[float, float | None] = {}
    failed: dict[float, int] = {}
    for p in task.quantiles:
        pairs = [
            (row.predictions[p], row.truth)
            for row in rows
            if row.predictions[p] is not None and math.isfinite(row.truth)
        ]
        failed[p] = len(rows) - len(pairs)
        mae_by_p[p] = mae([a for a, _ in pairs], [b for _, b in pairs]) if pairs else None
    if all(v is None for v in mae_by_p.values()):
        raise PredictionError("every target failed at every quantile level")

    interval_kind = task.interval.kind if task.interval is not None else None
    contained = None
    avg_len = None
    if task.interval is not None:
        spans = [row.interval for row in rows if row.interval is not None]
        if spans:
            avg_len = float(np.mean([hi - lo for lo, hi in spans]))
            contained = sum(
                1
                for row in rows
                if row.interval is not None
                and math.isfinite(row.truth)
                and row.interval[0] <= row.truth <= row.interval[1]
            )

    meta = {
        "n_train": sample.n,
        "dimension": sample.d,
        "vicinity": list(task.vicinity.offsets),
        "h_mean": cfg.bandwidth,
        "h_p": {p: c.bandwidth for p, c in cfgs.items()},
        "kernel_x": cfg.kernel_x.family,
        "kernel_y": cfg.kernel_y.family,
    }
    return ExperimentReport(
        rows=rows,
        mae=mae_by_p,
        failed=failed,
        interval_kind=interval_kind,
        contained_count=contained,
        average_interval_length=avg_len,
        meta=meta,
    )


def coverage_report(report: ExperimentReport) -> tuple[int, float]:
    """Count targets whose truth lies in the interval; average the widths."""
    spans = [(row.interval, row.truth) for row in report.rows if row.interval is not None]
    if not spans:
        raise ValueError("report contains no intervals")
    contained = sum(1 for (lo, hi), t in spans if math.isfinite(t) and lo <= t <= hi)
    avg_len = float(np.mean([hi - lo for (lo, hi), _ in spans]))
    return contained, avg_len


def default_targets(side: int) -> tuple[tuple[int, int], ...]:
    """Ten well-separated target sites inside a side x side observed block."""
    anchors = [max(3, int(side * frac)) for frac in (0.25, 0.5, 0.75)]
    corner = int(side * 0.86)
    sites = [(a, b) for a in anchors for b in anchors] + [(corner, corner)]
    return tuple(sites)


@dataclass(frozen=True)
class ReplicationConfig:
    """Everything the end-to-end simulated experiment needs."""

    region: GridRegion = GridRegion(61, 61)
    mask_side: int = 21
    mask_tail: int = 15
    spec_x: GrfSpec = GrfSpec(0.0, 5.0, 3.0)
    spec_z: GrfSpec = GrfSpec(0.0, 0.1, 5.0)
    seed_x: int = 1101
    seed_z: int = 2202
    n_seeds: int = 1
    vicinity: VicinityShape = VicinityShape(SMALL_VICINITY)
    targets: tuple[tuple[int, int], ...] = default_targets(21)
    quantiles: tuple[float, ...] = (0.05, 0.5, 0.95)
    interval: IntervalSpec | None = IntervalSpec(kind="predictive", p_low=0.05, p_high=0.95)
    bandwidth: float | str = "auto"
    bw_grid: tuple[float, ...] | None = None
    kernel_x: str = "gaussian"
    kernel_y: str = "epanechnikov"
    root_tol: float = 1e-8
    mass_threshold: float | None = None
    threads: int = 1


@dataclass(frozen=True)
class ReplicationResult:
    """Per-seed reports plus seed-median aggregates and the first field."""

    reports: tuple[ExperimentReport, ...]
    seeds: tuple[tuple[int, int], ...]
    aggregate: dict
    first_field: FieldOnGrid
    config: ReplicationConfig


def carve_targets(field: FieldOnGrid, targets) -> FieldOnGrid:
    """Remove target sites from the observation mask, keeping their values."""
    mask = field.mask.copy()
    for site in targets:
        mask[field.region.site_index(site)] = False
    return FieldOnGrid(field.region, field.values, mask)


def _run_one_seed(config: ReplicationConfig, seed_x: int, seed_z: int) -> ExperimentReport:
    _, xi = simulate_model(
        config.region,
        seed_x,
        seed_z,
        spec_x=config.spec_x,
        spec_z=config.spec_z,
        mask_side=config.mask_side,
        mask_tail=config.mask_tail,
    )
    field = carve_targets(xi, config.targets)
    task = PredictionTask(
        vicinity=config.vicinity,
        targets=config.targets,
        quantiles=config.quantiles,
        interval=config.interval,
    )
    sample = build_training(field, task.vicinity)
    base_cfg = EstimatorConfig(
        bandwidth=1.0,
        kernel_x=KernelSpec(config.kernel_x, sample.d),
        kernel_y=KernelSpec(config.kernel_y, 1),
        mass_threshold=config.mass_threshold,
        root_tol=config.root_tol,
    )
    if config.bandwidth == "auto":
        grid = list(config.bw_grid) if config.bw_grid is not None else default_grid(sample)
        h_mean, _ = h_mean_cv(sample, grid, base_cfg)
    else:
        h_mean = float(config.bandwidth)
    cfg = base_cfg.with_bandwidth(h_mean)
    report = predict(field, task, cfg, threads=1)
    report.meta["seed_x"] = seed_x
    report.meta["seed_z"] = seed_z
    return report


def run_replication(config: ReplicationConfig) -> ReplicationResult:
    """Simulate, train, select bandwidths, predict, and score over seeds.

    Seed pairs are (seed_x + k, seed_z + k) for k in 0..n_seeds-1;
    aggregates are seed medians.
    """
    seeds = tuple((config.seed_x + k, config.seed_z + k) for k in range(config.n_seeds))
    if config.threads > 1 and config.n_seeds > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            reports = tuple(pool.map(lambda s: _run_one_seed(config, *s), seeds))
    else:
        reports = tuple(_run_one_seed(config, sx, sz) for sx, sz in seeds)

    aggregate: dict = {"n_seeds": config.n_seeds, "median_mae": {}, "failed_targets": {}}
    for p in config.quantiles:
        vals = [r.mae[p] for r in reports if r.mae[p] is not None]
        aggregate["median_mae"][p] = float(np.median(vals)) if vals else None
        aggregate["failed_targets"][p] = int(sum(r.failed[p] for r in reports))
    if config.interval is not None:
        lens = [r.average_interval_length for r in reports if r.average_interval_length is not None]
        cont = [r.contained_count for r in reports if r.contained_count is not None]
        aggregate["median_interval_length"] = float(np.median(lens)) if lens else None
        aggregate["median_contained_count"] = float(np.median(cont)) if cont else None

    _, xi_first = simulate_model(
        config.region,
        seeds[0][0],
        seeds[0][1],
        spec_x=config.spec_x,
        spec_z=config.spec_z,
        mask_side=config.mask_side,
        mask_tail=config.mask_tail,
    )
    first_field = carve_targets(xi_first, config.targets)
    return ReplicationResult(
        reports=reports,
        seeds=seeds,
        aggregate=aggregate,
        first_field=first_field,
        config=config,
    )
