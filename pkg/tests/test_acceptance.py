"""End-to-end acceptance suite.

One test per acceptance criterion; each prints a single PASS/FAIL line
(visible with ``pytest -s``). Monte Carlo bands and frozen constants were
fixed from oracle runs before the implementation was trusted.
"""

import json
import math
import subprocess
import sys
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest

from quantfield.estimator import (
    EstimatorConfig,
    Sample,
    cond_cdf,
    cond_density,
    cond_quantile,
    confidence_interval,
    density_g,
    joint_density_f,
    local_constant_quantile,
    plugin_sigma2,
    psi,
)
from quantfield.kernels import EPANECHNIKOV, GAUSSIAN, KernelSpec
from quantfield.predictor import ReplicationConfig, VicinityShape, mae, run_replication

import oracles

_DURATIONS = {}


@contextmanager
def criterion(name, budget=None):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        elapsed = time.perf_counter() - start
        print(f"\n[ACCEPTANCE] {name}: FAIL ({elapsed:.1f}s)")
        raise
    elapsed = time.perf_counter() - start
    _DURATIONS[name] = elapsed
    budget_note = f", budget {budget:.0f}s" if budget else ""
    print(f"\n[ACCEPTANCE] {name}: PASS ({elapsed:.1f}s{budget_note})")
    if budget is not None:
        assert elapsed < budget, f"{name} exceeded its runtime budget"


def rel_diff(a, b):
    scale = max(abs(a), abs(b))
    if scale == 0.0:
        return 0.0
    return abs(a - b) / scale


def fixture_case(seed):
    """One randomized estimator fixture: sample, query point, config pieces."""
    rng = np.random.default_rng(1000 + seed)
    d = [1, 2, 4][seed % 3]
    n = int(rng.integers(30, 201))
    fam_k = [GAUSSIAN, EPANECHNIKOV][seed % 2]
    fam_w = [EPANECHNIKOV, GAUSSIAN][(seed // 2) % 2]
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    y = np.sin(2.0 * X[:, 0]) + 0.4 * X.sum(axis=1) + 0.3 * rng.standard_normal(n)
    x0 = X[int(rng.integers(n))] + 0.03 * rng.standard_normal(d)
    y0 = float(np.quantile(y, rng.uniform(0.25, 0.75)))
    h = float(rng.uniform(0.45, 0.8))
    return Sample(X, y), x0, y0, h, fam_k, fam_w


def test_criterion_1_oracle_equivalence():
    with criterion("1 oracle equivalence", budget=10.0):
        for seed in range(20):
            sample, x0, y0, h, fam_k, fam_w = fixture_case(seed)
            cfg = EstimatorConfig(h, KernelSpec(fam_k, sample.d), KernelSpec(fam_w, 1))
            X, Y = sample.covariates.tolist(), sample.responses.tolist()
            x0l = list(x0)

            checks = [
                (density_g(sample, x0, cfg), oracles.naive_g(X, x0l, h, fam_k)),
                (
                    joint_density_f(sample, x0, y0, cfg),
                    oracles.naive_f(X, Y, x0l, y0, h, fam_k, fam_w),
                ),
                (psi(sample, x0, y0, cfg), oracles.naive_psi(X, Y, x0l, y0, h, fam_k, fam_w)),
                (
                    cond_cdf(sample, x0, y0, cfg),
                    oracles.naive_cdf(X, Y, x0l, y0, h, fam_k, fam_w),
                ),
                (
                    cond_density(sample, x0, y0, cfg),
                    oracles.naive_cond_density(X, Y, x0l, y0, h, fam_k, fam_w),
                ),
                (
                    plugin_sigma2(sample, x0, y0, cfg),
                    oracles.naive_sigma2(X, Y, x0l, y0, h, fam_k, fam_w),
                ),
            ]
            res = confidence_interval(sample, x0, 0.35, 0.1, cfg)
            mu = cond_quantile(sample, x0, 0.35, cfg).value
            lo, hi = oracles.naive_interval(X, Y, x0l, 0.35, 0.1, h, fam_k, fam_w, mu)
            checks.append((res.lower, lo))
            checks.append((res.upper, hi))

            for got, expected in checks:
                assert rel_diff(got, expected) <= 1e-12, (seed, got, expected)


def test_criterion_2_inversion_and_monotonicity():
    with criterion("2 inversion & monotonicity", budget=30.0):
        queries_done = 0
        rng = np.random.default_rng(777)
        for block in range(5):
            fam_w = EPANECHNIKOV if block % 2 == 0 else GAUSSIAN
            n, d = 200, 2
            X = rng.uniform(-1.0, 1.0, size=(n, d))
            y = np.sin(2.0 * X[:, 0]) + 0.4 * X[:, 1] + 0.3 * rng.standard_normal(n)
            sample = Sample(X, y)
            cfg = EstimatorConfig(0.5, KernelSpec(GAUSSIAN, d), KernelSpec(fam_w, 1))
            for _ in range(100):
                x0 = X[int(rng.integers(n))] + 0.03 * rng.standard_normal(d)
                p = float(rng.uniform(0.02, 0.98))
                q = cond_quantile(sample, x0, p, cfg)
                assert abs(q.cdf_at_value - p) <= 1e-8
                queries_done += 1
            # CDF monotone on a dense response scan
            x0 = X[0]
            ys = np.linspace(y.min() - 1.0, y.max() + 1.0, 1000)
            vals = np.array([cond_cdf(sample, x0, yy, cfg) for yy in ys])
            assert np.all(np.diff(vals) >= -1e-14)
            assert np.all((vals >= 0.0) & (vals <= 1.0))
            # quantile curves are monotone in the level
            for _ in range(4):
                xq = X[int(rng.integers(n))]
                levels = [0.05, 0.25, 0.5, 0.75, 0.95]
                vals = [cond_quantile(sample, xq, p, cfg).value for p in levels]
                assert all(a <= b for a, b in zip(vals, vals[1:]))
        assert queries_done == 500


def test_criterion_3_check_loss_equivalence():
    with criterion("3 check-loss equivalence"):
        rng = np.random.default_rng(303)
        for case in range(50):
            d = [1, 2][case % 2]
            n = int(rng.integers(25, 61))
            X = rng.uniform(-1.0, 1.0, size=(n, d))
            y = 0.7 * X[:, 0] + 0.4 * rng.standard_normal(n)
            sample = Sample(X, y)
            x0 = X[int(rng.integers(n))] + 0.05 * rng.standard_normal(d)
            h = float(rng.uniform(0.3, 0.7))
            p = [0.25, 0.5, 0.75][case % 3]
            cfg = EstimatorConfig(h, KernelSpec(GAUSSIAN, d), KernelSpec(EPANECHNIKOV, 1))
            nu = local_constant_quantile(sample, x0, p, cfg)
            ref, step = oracles.checkloss_scan(X.tolist(), y.tolist(), list(x0), p, h, GAUSSIAN)
            assert abs(nu - ref) <= step, (case, nu, ref, step)


@pytest.fixture(scope="module")
def replication_sweeps():
    runs = {}
    start = time.perf_counter()
    base = ReplicationConfig(n_seeds=20)
    runs["small"] = run_replication(base)
    runs["large"] = run_replication(replace(base, vicinity=VicinityShape.large()))
    runs["elapsed"] = time.perf_counter() - start
    return runs


def test_criterion_4_reference_experiment(replication_sweeps):
    with criterion("4 reference experiment replication"):
        print(f"  (20-seed sweeps over both vicinities took {replication_sweeps['elapsed']:.1f}s)")
        for key in ("small", "large"):
            agg = replication_sweeps[key].aggregate
            med = agg["median_mae"]
            # (a) median MAE at the median level
            assert med[0.5] <= 0.1, (key, med)
            # (b) extreme levels no easier than the median level
            assert med[0.5] <= med[0.05], (key, med)
            assert med[0.5] <= med[0.95], (key, med)
            # (c) 90% predictive intervals cover most targets in the median seed
            assert agg["median_contained_count"] >= 7, (key, agg)
            # (d) interval widths in the plausible range
            assert 0.01 <= agg["median_interval_length"] <= 0.5, (key, agg)
        assert replication_sweeps["elapsed"] < 300.0


def test_criterion_5_consistency_trend():
    with criterion("5 consistency trend 21 -> 41"):
        # fixed moderate bandwidth keeps the comparison in the regime where
        # estimation error, not small-bandwidth dependence leakage, dominates;
        # targets are identical for both sides so difficulty is held fixed
        base = ReplicationConfig(n_seeds=20, bandwidth=0.2)
        res21 = run_replication(base)
        res41 = run_replication(replace(base, mask_side=41))
        m21 = res21.aggregate["median_mae"][0.5]
        m41 = res41.aggregate["median_mae"][0.5]
        assert m41 <= m21, (m21, m41)


def test_criterion_6_clt_scaling():
    with criterion("6 CLT scaling sanity", budget=180.0):
        n = 2000
        x0 = [0.5]
        p = 0.5
        true_mu = math.sin(2 * 0.5)
        h = 0.8 * n ** (-0.25)
        cfg = EstimatorConfig(h, KernelSpec(GAUSSIAN, 1), KernelSpec(EPANECHNIKOV, 1))
        scaled = []
        plugins = []
        for rep in range(200):
            rng = np.random.default_rng(606000 + rep)
            X = rng.uniform(0.0, 1.0, n)
            Y = np.sin(2.0 * X) + 0.5 * rng.standard_normal(n)
            sample = Sample(X, Y)
            q = cond_quantile(sample, x0, p, cfg)
            scaled.append(math.sqrt(n * h) * (q.value - true_mu))
            sig2 = plugin_sigma2(sample, x0, q.value, cfg)
            f_at = cond_density(sample, x0, q.value, cfg)
            plugins.append(math.sqrt(sig2) / f_at)
        emp_sd = float(np.std(scaled, ddof=1))
        plug = float(np.median(plugins))
        assert 0.5 <= emp_sd / plug <= 2.0, (emp_sd, plug)


# p = 0.5 predictions and true values exactly as printed in the source table
# (left block), frozen for the arithmetic check.
TABLE_MEDIAN_PREDICTIONS = [
    0.1930, -0.2289, 0.1990, -0.5062, 0.2929, -0.2527, 0.4007, -0.5295, -0.3463, -0.2702,
]
TABLE_TRUE_VALUES = [
    0.2009, -0.2315, 0.1966, -0.4906, 0.2901, -0.2535, 0.3941, -0.5177, -0.3217, -0.2843,
]


def test_criterion_7_published_table_arithmetic():
    with criterion("7 published-table MAE arithmetic"):
        value = mae(TABLE_MEDIAN_PREDICTIONS, TABLE_TRUE_VALUES)
        assert abs(value - 0.0089) <= 5e-4, value


def test_criterion_8_cli_determinism(tmp_path):
    with criterion("8 CLI determinism across thread counts"):
        config = {
            "grid": {"n1": 28, "n2": 28},
            "mask": {"side": 21, "tail": 15},
            "grf_x": {"mean": 0.0, "variance": 5.0, "scale": 3.0},
            "grf_z": {"mean": 0.0, "variance": 0.1, "scale": 5.0},
            "seeds": {"x": 1101, "z": 2202, "count": 2},
            "vicinity": "small",
            "targets": [[5, 5], [10, 10], [15, 15], [18, 18]],
            "quantiles": [0.05, 0.5, 0.95],
            "interval": {"kind": "predictive", "p_low": 0.05, "p_high": 0.95},
            "estimator": {"bandwidth": "auto"},
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        outputs = []
        for threads, name in ((1, "run1"), (4, "run2")):
            out = tmp_path / name
            proc = subprocess.run(
                [
                    sys.executable, "-m", "quantfield", "replicate",
                    "--config", str(config_path), "--out", str(out),
                    "--threads", str(threads),
                ],
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
            outputs.append(out)
        for name in ("report.json", "table.csv", "plot_data.csv"):
            a = (outputs[0] / name).read_bytes()
            b = (outputs[1] / name).read_bytes()
            assert a == b, f"{name} differs between thread counts"
