import json
import math

import numpy as np
import pytest

from quantfield.errors import ConfigError, PredictionError
from quantfield.estimator import EstimatorConfig
from quantfield.field_sim import FieldOnGrid, GridRegion, observation_mask, simulate_model
from quantfield.io import replication_to_dict, report_to_dict
from quantfield.kernels import EPANECHNIKOV, GAUSSIAN, KernelSpec
from quantfield.predictor import (
    ExperimentReport,
    IntervalSpec,
    PredictionTask,
    ReplicationConfig,
    VicinityShape,
    build_training,
    carve_targets,
    coverage_report,
    default_targets,
    mae,
    predict,
    run_replication,
    vicinity_sites,
    vicinity_values,
)

import oracles


def small_cfg(d, h=0.2):
    return EstimatorConfig(h, KernelSpec(GAUSSIAN, d), KernelSpec(EPANECHNIKOV, 1))


def reference_field(seed_x=1101, seed_z=2202, region=GridRegion(25, 25)):
    _, xi = simulate_model(region, seed_x, seed_z)
    return xi


class TestVicinityShape:
    def test_canonical_order_and_dimension(self):
        shape = VicinityShape(((1, 1), (-1, 1), (1, -1), (-1, -1)))
        assert shape.offsets == ((-1, -1), (-1, 1), (1, -1), (1, 1))
        assert shape.d == 4
        assert VicinityShape.large().d == 16

    def test_validation(self):
        with pytest.raises(ValueError):
            VicinityShape(())
        with pytest.raises(ValueError):
            VicinityShape(((0, 0), (1, 1)))
        with pytest.raises(ValueError):
            VicinityShape(((1, 1), (1, 1)))

    def test_products_factory(self):
        shape = VicinityShape.from_products((-1, 1), (-1, 1))
        assert shape.offsets == VicinityShape.small().offsets


class TestVicinitySites:
    def test_translation(self):
        sites = vicinity_sites((5, 5), VicinityShape.small())
        assert sites == [(4, 4), (4, 6), (6, 4), (6, 6)]

    def test_size_matches_offsets(self):
        shape = VicinityShape.large()
        assert len(vicinity_sites((10, 10), shape)) == shape.d

    def test_boundary_site_flagged_downstream(self):
        sites = vicinity_sites((1, 1), VicinityShape.small())
        assert (0, 0) in sites
        field = reference_field()
        with pytest.raises(ValueError):
            vicinity_values(field, (1, 1), VicinityShape.small())


class TestBuildTraining:
    def test_count_matches_brute_force_on_reference_mask(self):
        region = GridRegion(61, 61)
        _, xi = simulate_model(region, 1, 2)
        for shape in (VicinityShape.small(), VicinityShape.large()):
            sample = build_training(xi, shape)
            expected = oracles.brute_force_training_count(xi.mask_grid(), shape.offsets)
            assert sample.n == expected
            assert sample.d == shape.d
        # known counts for the reference mask
        assert build_training(xi, VicinityShape.small()).n == 374
        assert build_training(xi, VicinityShape.large()).n == 300

    def test_count_with_carved_targets(self):
        region = GridRegion(61, 61)
        _, xi = simulate_model(region, 1, 2)
        field = carve_targets(xi, default_targets(21))
        for shape in (VicinityShape.small(), VicinityShape.large()):
            sample = build_training(field, shape)
            expected = oracles.brute_force_training_count(field.mask_grid(), shape.offsets)
            assert sample.n == expected
        assert build_training(field, VicinityShape.small()).n == 324
        assert build_training(field, VicinityShape.large()).n == 141

    def test_edge_sites_excluded(self):
        region = GridRegion(4, 4)
        field = FieldOnGrid(region, np.arange(16.0), np.ones(16, dtype=bool))
        sample = build_training(field, VicinityShape.small())
        # only the 2x2 interior survives the diagonal vicinity
        assert sample.n == 4

    def test_covariate_order_is_canonical(self):
        region = GridRegion(5, 5)
        values = np.arange(25.0)
        field = FieldOnGrid(region, values, np.ones(25, dtype=bool))
        shape = VicinityShape.small()
        sample = build_training(field, shape)
        # find the training row for site (3, 3): responses are unique here
        idx = int(np.where(sample.responses == field.value_at((3, 3)))[0][0])
        expected = [field.value_at(s) for s in vicinity_sites((3, 3), shape)]
        assert sample.covariates[idx].tolist() == expected

    def test_empty_training_rejected(self):
        region = GridRegion(3, 3)
        mask = np.zeros(9, dtype=bool)
        mask[4] = True  # single observed site
        field = FieldOnGrid(region, np.arange(9.0), mask)
        with pytest.raises(ConfigError):
            build_training(field, VicinityShape.small())


class TestMae:
    def test_identical(self):
        assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_hand_value(self):
        assert mae([1.0, 3.0], [2.0, 2.0]) == 1.0

    def test_mismatch(self):
        with pytest.raises(ValueError):
            mae([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            mae([], [])


class TestCarveTargets:
    def test_only_targets_flip(self):
        field = reference_field()
        carved = carve_targets(field, [(5, 5), (10, 10)])
        assert not carved.observed_at((5, 5))
        assert not carved.observed_at((10, 10))
        diff = field.mask != carved.mask
        assert int(diff.sum()) == 2
        assert np.array_equal(field.values, carved.values)


class TestPredict:
    def make_task(self, targets=((5, 5), (10, 10), (15, 15))):
        return PredictionTask(
            vicinity=VicinityShape.small(),
            targets=tuple(targets),
            quantiles=(0.05, 0.5, 0.95),
            interval=IntervalSpec(kind="predictive", p_low=0.05, p_high=0.95),
        )

    def test_basic_report(self):
        field = carve_targets(reference_field(), [(5, 5), (10, 10), (15, 15)])
        task = self.make_task()
        report = predict(field, task, small_cfg(4))
        assert len(report.rows) == 3
        for row in report.rows:
            assert set(row.predictions) == {0.05, 0.5, 0.95}
            assert row.interval is not None
            lo, hi = row.interval
            assert lo <= row.predictions[0.5] <= hi
        assert report.mae[0.5] is not None
        assert report.meta["n_train"] == build_training(field, task.vicinity).n

    def test_mae_matches_rows(self):
        field = carve_targets(reference_field(), [(5, 5), (10, 10), (15, 15)])
        report = predict(field, self.make_task(), small_cfg(4))
        expected = np.mean([abs(r.predictions[0.5] - r.truth) for r in report.rows])
        assert report.mae[0.5] == pytest.approx(expected, rel=1e-14)

    def test_observed_target_rejected(self):
        field = reference_field()
        with pytest.raises(ValueError):
            predict(field, self.make_task(), small_cfg(4))

    def test_degenerate_concentration(self):
        # craft a field where the target vicinity exactly matches one training
        # site's vicinity; with a tiny bandwidth that site dominates
        region = GridRegion(6, 6)
        rng = np.random.default_rng(8)
        values = rng.uniform(0.0, 1.0, 36)
        f0 = FieldOnGrid(region, values, np.ones(36, dtype=bool))
        shape = VicinityShape.small()
        donor, target = (2, 2), (5, 5)
        values = values.copy()
        for s_d, s_t in zip(vicinity_sites(donor, shape), vicinity_sites(target, shape)):
            values[region.site_index(s_t)] = f0.value_at(s_d)
        field = carve_targets(FieldOnGrid(region, values, np.ones(36, dtype=bool)), [target])
        h = 0.01
        cfg = small_cfg(4, h=h)
        task = PredictionTask(vicinity=shape, targets=(target,), quantiles=(0.5,))
        report = predict(field, task, cfg)
        donor_response = field.value_at(donor)
        h_med = report.meta["h_p"][0.5]
        assert abs(report.rows[0].predictions[0.5] - donor_response) <= h_med

    def test_failures_recorded_and_excluded(self):
        field = carve_targets(reference_field(), [(5, 5), (10, 10), (15, 15)])
        cfg = EstimatorConfig(0.05, KernelSpec(EPANECHNIKOV, 4), KernelSpec(EPANECHNIKOV, 1))
        report = predict(field, self.make_task(), cfg)
        total_failures = sum(report.failed.values())
        assert total_failures > 0
        for row in report.rows:
            for p, err in row.errors.items():
                assert row.predictions[p] is None
                assert err == "no_mass"

    def test_all_failed_raises(self):
        field = carve_targets(reference_field(), [(5, 5), (10, 10), (15, 15)])
        cfg = EstimatorConfig(1e-4, KernelSpec(EPANECHNIKOV, 4), KernelSpec(EPANECHNIKOV, 1))
        with pytest.raises(PredictionError):
            predict(field, self.make_task(), cfg)

    def test_thread_count_invariance(self):
        field = carve_targets(reference_field(), [(5, 5), (10, 10), (15, 15)])
        task = self.make_task()
        a = predict(field, task, small_cfg(4), threads=1)
        b = predict(field, task, small_cfg(4), threads=4)
        assert json.dumps(report_to_dict(a), sort_keys=True) == json.dumps(
            report_to_dict(b), sort_keys=True
        )

    def test_asymptotic_interval_kind(self):
        field = carve_targets(reference_field(), [(5, 5), (10, 10)])
        task = PredictionTask(
            vicinity=VicinityShape.small(),
            targets=((5, 5), (10, 10)),
            quantiles=(0.5,),
            interval=IntervalSpec(kind="asymptotic", alpha=0.1, center_p=0.5),
        )
        report = predict(field, task, small_cfg(4))
        assert report.interval_kind == "asymptotic"
        for row in report.rows:
            lo, hi = row.interval
            assert lo <= row.predictions[0.5] <= hi


class TestCoverageReport:
    def test_degenerate_intervals(self):
        rows = (
            type("Row", (), {"interval": (1.0, 1.0), "truth": 2.0})(),
            type("Row", (), {"interval": (2.0, 2.0), "truth": 3.0})(),
        )
        report = ExperimentReport(
            rows=rows, mae={}, failed={}, interval_kind="predictive",
            contained_count=None, average_interval_length=None,
        )
        contained, avg = coverage_report(report)
        assert contained == 0
        assert avg == 0.0

    def test_shift_invariance(self):
        def fake(lo, hi, truth):
            return type("Row", (), {"interval": (lo, hi), "truth": truth})()

        base = ExperimentReport(
            rows=(fake(0.0, 1.0, 0.5), fake(1.0, 2.0, 2.5)),
            mae={}, failed={}, interval_kind="predictive",
            contained_count=None, average_interval_length=None,
        )
        c = 11.5
        shifted = ExperimentReport(
            rows=(fake(0.0 + c, 1.0 + c, 0.5 + c), fake(1.0 + c, 2.0 + c, 2.5 + c)),
            mae={}, failed={}, interval_kind="predictive",
            contained_count=None, average_interval_length=None,
        )
        assert coverage_report(base)[0] == coverage_report(shifted)[0]
        assert coverage_report(base)[1] == pytest.approx(coverage_report(shifted)[1], rel=1e-12)

    def test_no_intervals_rejected(self):
        report = ExperimentReport(
            rows=(), mae={}, failed={}, interval_kind=None,
            contained_count=None, average_interval_length=None,
        )
        with pytest.raises(ValueError):
            coverage_report(report)


class TestReplication:
    def small_config(self, **kw):
        defaults = dict(
            region=GridRegion(28, 28),
            n_seeds=2,
            targets=((5, 5), (10, 10), (15, 15), (18, 18)),
            bandwidth=0.2,
        )
        defaults.update(kw)
        return ReplicationConfig(**defaults)

    def test_determinism(self):
        config = self.small_config()
        a = run_replication(config)
        b = run_replication(config)
        echo = {"n": 1}
        assert json.dumps(replication_to_dict(a, echo), sort_keys=True) == json.dumps(
            replication_to_dict(b, echo), sort_keys=True
        )

    def test_thread_invariance(self):
        a = run_replication(self.small_config(threads=1))
        b = run_replication(self.small_config(threads=4))
        echo = {}
        assert json.dumps(replication_to_dict(a, echo), sort_keys=True) == json.dumps(
            replication_to_dict(b, echo), sort_keys=True
        )

    def test_seed_pairing(self):
        result = run_replication(self.small_config())
        assert result.seeds == ((1101, 2202), (1102, 2203))
        assert result.reports[0].meta["seed_x"] == 1101
        assert result.reports[1].meta["seed_x"] == 1102

    def test_aggregate_medians(self):
        result = run_replication(self.small_config(n_seeds=3))
        for p in (0.05, 0.5, 0.95):
            per_seed = [r.mae[p] for r in result.reports]
            assert result.aggregate["median_mae"][p] == pytest.approx(np.median(per_seed))

    def test_predictive_ordering_on_reference_run(self):
        config = ReplicationConfig(n_seeds=1)
        result = run_replication(config)
        for row in result.reports[0].rows:
            lo, hi = row.interval
            assert lo <= row.predictions[0.5] <= hi
            assert lo == row.predictions[0.05]
            assert hi == row.predictions[0.95]

    def test_first_field_has_carved_targets(self):
        result = run_replication(self.small_config())
        for t in result.config.targets:
            assert not result.first_field.observed_at(t)


def test_default_targets_layout():
    targets = default_targets(21)
    assert len(targets) == 10
    assert len(set(targets)) == 10
    assert targets == ((5, 5), (5, 10), (5, 15), (10, 5), (10, 10), (10, 15), (15, 5), (15, 10), (15, 15), (18, 18))
    # all inside the block with the large vicinity fully interior
    for i, j in default_targets(41):
        assert 3 <= i <= 39 and 3 <= j <= 39
