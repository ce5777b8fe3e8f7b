import json

import numpy as np
import pytest

from granlab.circles import CircleSpec, generate_circles
from granlab.dataset import save_dataset
from granlab.exceptions import ConfigError, DataError, ParseError
from granlab.harness import (
    CSV_COLUMNS,
    ExperimentSpec,
    PointConfig,
    aggregate,
    batch_size_for,
    coarse_accuracy,
    load_archive,
    persist,
    read_csv_rows,
    replicate_seed,
    run_comparison,
    summarize_point,
    sweep,
)
from granlab.losses import FINE
from granlab.training import TrainConfig

from conftest import toy_separable


class TestCoarseAccuracy:
    def test_both_correct(self):
        assert coarse_accuracy(np.array([0.7, 0.2]), np.array([1.0, 0.0])) == 1.0

    def test_tie_counts_as_one(self):
        assert coarse_accuracy(np.array([0.5]), np.array([1.0])) == 1.0
        assert coarse_accuracy(np.array([0.5]), np.array([0.0])) == 0.0

    def test_hand_count(self):
        acc = coarse_accuracy(np.array([0.4, 0.6, 0.9]), np.array([1.0, 1.0, 0.0]))
        assert acc == pytest.approx(1.0 / 3.0)

    def test_empty(self):
        with pytest.raises(DataError):
            coarse_accuracy(np.array([]), np.array([]))


class TestAggregate:
    def test_quartiles_linear_interpolation(self):
        med, q1, q3 = aggregate([1.0, 2.0, 3.0, 4.0], "quartiles")
        assert (med, q1, q3) == (2.5, 1.75, 3.25)

    def test_constant_list(self):
        med, q1, q3 = aggregate([2.0, 2.0, 2.0], "quartiles")
        assert med == q1 == q3 == 2.0
        mean, se = aggregate([2.0, 2.0, 2.0], "standard_error")
        assert (mean, se) == (2.0, 0.0)

    def test_standard_error_hand_value(self):
        mean, se = aggregate([0.0, 1.0], "standard_error")
        assert mean == 0.5
        assert se == pytest.approx(0.5, abs=1e-15)

    def test_single_value_se_rejected(self):
        with pytest.raises(DataError):
            aggregate([1.0], "standard_error")

    def test_brute_force_reference(self, rng):
        for _ in range(50):
            values = rng.normal(0, 1, int(rng.integers(2, 40)))
            med, q1, q3 = aggregate(values, "quartiles")
            srt = np.sort(values)

            def quantile(q):
                pos = q * (srt.size - 1)
                lo = int(np.floor(pos))
                hi = min(lo + 1, srt.size - 1)
                return srt[lo] + (pos - lo) * (srt[hi] - srt[lo])

            assert med == pytest.approx(quantile(0.5), abs=1e-12)
            assert q1 == pytest.approx(quantile(0.25), abs=1e-12)
            assert q3 == pytest.approx(quantile(0.75), abs=1e-12)
            mean, se = aggregate(values, "standard_error")
            assert mean == pytest.approx(values.mean(), abs=1e-12)
            manual = np.sqrt(((values - values.mean()) ** 2).sum() / (values.size - 1))
            assert se == pytest.approx(manual / np.sqrt(values.size), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            aggregate([], "quartiles")


class TestBatchSizeRule:
    @pytest.mark.parametrize("size,expected", [
        (1, 8), (400, 8), (800, 8), (801, 16), (3200, 16), (6400, 16),
        (6401, 32), (25600, 32), (10**6, 32),
    ])
    def test_rule(self, size, expected):
        assert batch_size_for(size) == expected

    def test_rejects_non_positive(self):
        with pytest.raises(ConfigError):
            batch_size_for(0)


class TestSeeds:
    def test_replicate_seeds_pairwise_distinct(self):
        seeds = [replicate_seed(1, p, r) for p in range(5) for r in range(10)]
        assert len(set(seeds)) == len(seeds)

    def test_replicate_seeds_deterministic(self):
        assert replicate_seed(7, 2, 3) == replicate_seed(7, 2, 3)


def fast_point(train_size, fine_hidden=6, coarse_hidden=6, max_epochs=40):
    cfg = TrainConfig(optimizer="sgd", lr_start=0.1, lr_end=0.05, max_epochs=max_epochs,
                      batch_size=8, early_stop_patience=0, validation_fraction=0.0)
    return PointConfig(
        axis_value=float(train_size),
        train_size=train_size,
        fine_hidden=fine_hidden,
        coarse_hidden=coarse_hidden,
        fine_loss=FINE,
        config=cfg,
        activation="relu",
    )


class TestRunComparison:
    def test_separable_task_both_perfect(self):
        pool = toy_separable(n_per_class=40, seed=1)
        test = toy_separable(n_per_class=25, seed=2)
        record = run_comparison(pool, test, fast_point(60, max_epochs=120), seed=5)
        assert record.acc_fine_test == 1.0
        assert record.acc_coarse_test == 1.0
        assert record.delta_test == 0.0

    def test_record_fields(self):
        pool = toy_separable(n_per_class=30, seed=3)
        test = toy_separable(n_per_class=10, seed=4)
        record = run_comparison(pool, test, fast_point(40), seed=11, replicate=2)
        assert record.p == 40
        assert record.replicate == 2
        # fine model: N*(d+1) + K*(N+1) with d=2, K=2, N=6
        assert record.n_fine == 6 * 3 + 2 * 7
        assert record.n_coarse == 6 * 3 + 1 * 7
        for acc in (record.acc_fine_test, record.acc_coarse_test,
                    record.acc_fine_train, record.acc_coarse_train):
            assert 0.0 <= acc <= 1.0
        assert record.epochs_fine > 0 and record.epochs_coarse > 0

    def test_deterministic_given_seed(self):
        pool = toy_separable(n_per_class=30, seed=3)
        test = toy_separable(n_per_class=10, seed=4)
        a = run_comparison(pool, test, fast_point(40), seed=11)
        b = run_comparison(pool, test, fast_point(40), seed=11)
        assert a == b


def circles_sweep_spec(tmp_path=None, **overrides):
    base = dict(
        name="tiny-circles",
        source={"kind": "circles", "k": 4, "n_points": 400, "rho": 0.0, "seed": 1},
        axis="train_size",
        values=[64, 128],
        fine_hidden=8,
        coarse_hidden=8,
        test_size=200,
        replicates=3,
        seed=5,
        train={"optimizer": "sgd", "lr_start": 0.1, "lr_end": 0.05, "max_epochs": 15,
               "early_stop_patience": 0, "validation_fraction": 0.0},
        aggregate_mode="standard_error",
    )
    base.update(overrides)
    return ExperimentSpec(**base)


class TestSweep:
    def test_runs_all_points_and_replicates(self):
        result = sweep(circles_sweep_spec())
        assert [p.axis_value for p in result.points] == [64.0, 128.0]
        for point in result.points:
            assert len(point.records) == 3
            assert not point.failures
            assert len({r.seed for r in point.records}) == 3

    def test_rerun_reproduces_records(self):
        a = sweep(circles_sweep_spec())
        b = sweep(circles_sweep_spec())
        for pa, pb in zip(a.points, b.points):
            assert pa.records == pb.records

    def test_parallel_matches_serial(self):
        serial = sweep(circles_sweep_spec(workers=1))
        parallel = sweep(circles_sweep_spec(workers=2))
        for ps, pp in zip(serial.points, parallel.points):
            assert ps.records == pp.records

    def test_delta_equals_mean_of_run_deltas(self):
        result = sweep(circles_sweep_spec())
        for point in result.points:
            row = summarize_point(point, "standard_error")
            deltas = [r.delta_test for r in point.records]
            fines = [r.acc_fine_test for r in point.records]
            coarses = [r.acc_coarse_test for r in point.records]
            assert abs(row["delta"] - np.mean(deltas)) < 1e-12
            assert abs(row["delta"] - (np.mean(fines) - np.mean(coarses))) < 1e-12

    def test_n_over_p_exact(self):
        result = sweep(circles_sweep_spec())
        row = summarize_point(result.points[0], "standard_error")
        record = result.points[0].records[0]
        assert row["n_over_p"] == record.n_fine / 64

    def test_match_capacity_default(self):
        spec = circles_sweep_spec(coarse_hidden=None, values=[64], replicates=2)
        result = sweep(spec)
        record = result.points[0].records[0]
        # d=2, k=4, N=8: round((8*7 + 3) / 4) = round(14.75) = 15
        assert record.n_coarse == 15 * 3 + 16

    def test_beta_axis_uses_hybrid_loss(self):
        spec = circles_sweep_spec(axis="beta", values=[0.0, 1.0], train_size=64,
                                  replicates=2)
        result = sweep(spec)
        assert len(result.points) == 2

    def test_hidden_neurons_axis(self):
        spec = circles_sweep_spec(axis="hidden_neurons", values=[4, 8], train_size=64,
                                  replicates=2, coarse_hidden=None)
        result = sweep(spec)
        assert result.points[0].records[0].n_fine == 4 * 3 + 4 * 5

    def test_param_data_ratio_axis(self):
        spec = circles_sweep_spec(axis="param_data_ratio",
                                  values=[[128, 4], [64, 8]], replicates=2)
        result = sweep(spec)
        n4 = 4 * 3 + 4 * 5
        n8 = 8 * 3 + 4 * 9
        assert result.points[0].axis_value == pytest.approx(n4 / 128)
        assert result.points[1].axis_value == pytest.approx(n8 / 64)


class TestSpecValidation:
    def test_unknown_axis(self):
        with pytest.raises(ConfigError):
            circles_sweep_spec(axis="learning_rate").validate()

    def test_values_must_increase(self):
        with pytest.raises(ConfigError):
            circles_sweep_spec(values=[128, 64]).validate()

    def test_train_size_required_off_axis(self):
        with pytest.raises(ConfigError):
            circles_sweep_spec(axis="beta", values=[0.0, 0.5]).validate()

    def test_oversized_train_size(self):
        spec = circles_sweep_spec(values=[1000])
        with pytest.raises(DataError):
            sweep(spec)

    def test_json_round_trip(self):
        spec = circles_sweep_spec()
        clone = ExperimentSpec.from_json(json.dumps(spec.to_dict()))
        assert clone == spec


class TestPersistence:
    def test_csv_and_archive_round_trip(self, tmp_path):
        result = sweep(circles_sweep_spec())
        csv_path, json_path = persist(result, tmp_path)
        assert csv_path.exists() and json_path.exists()

        loaded = load_archive(json_path)
        assert loaded.spec == result.spec
        for pa, pb in zip(loaded.points, result.points):
            assert pa.axis_value == pb.axis_value
            assert pa.records == pb.records

        rows = read_csv_rows(csv_path)
        assert len(rows) == 2
        assert list(rows[0]) == list(CSV_COLUMNS)
        assert rows[0]["replicates"] == 3.0

    def test_csv_header_comment_and_formatting(self, tmp_path):
        result = sweep(circles_sweep_spec())
        csv_path, _ = persist(result, tmp_path)
        lines = csv_path.read_text().splitlines()
        assert lines[0].startswith("# granlab-sweep-csv/1")
        assert "aggregate=standard_error" in lines[0]
        # at most 9 significant digits, '.' as the decimal separator
        for field in lines[2].split(","):
            mantissa = field.split("e")[0].lstrip("-").replace(".", "").lstrip("0")
            assert len(mantissa) <= 9
            float(field)

    def test_reruns_differ_only_in_timestamp(self, tmp_path):
        result = sweep(circles_sweep_spec())
        a, _ = persist(result, tmp_path / "a")
        b, _ = persist(result, tmp_path / "b")
        tail_a = a.read_text().splitlines()[1:]
        tail_b = b.read_text().splitlines()[1:]
        assert tail_a == tail_b

    def test_malformed_csv_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# comment\naxis_value,acc_fine\n1.0,0.5\n2.0,oops\n")
        with pytest.raises(ParseError, match="line 4"):
            read_csv_rows(path)

    def test_empty_record_list_gives_header_only(self, tmp_path):
        result = sweep(circles_sweep_spec(replicates=3))
        result.points = []
        csv_path, _ = persist(result, tmp_path)
        lines = csv_path.read_text().splitlines()
        assert len(lines) == 2  # comment + header

    def test_file_source_round_trip(self, tmp_path):
        data = generate_circles(CircleSpec(k=4, n_points=500, rho=0.0, seed=2))
        path = save_dataset(data, tmp_path / "pool.json")
        spec = circles_sweep_spec(source={"kind": "file", "path": str(path)},
                                  values=[64], replicates=2)
        result = sweep(spec)
        assert result.points[0].records[0].p == 64

    def test_real_source_end_to_end(self, tmp_path, rng):
        # synthetic K-MNIST-shaped IDX files drive the real-data sweep path
        from granlab.realdata import write_idx

        directory = tmp_path / "kmnist"
        directory.mkdir()
        for prefix, count in (("train", 200), ("t10k", 80)):
            images = rng.integers(0, 256, (count, 2, 2)).astype(np.uint8)
            labels = (np.arange(count) % 10).astype(np.uint8)
            img, lab = write_idx(images, labels)
            (directory / f"{prefix}-images-idx3-ubyte").write_bytes(img)
            (directory / f"{prefix}-labels-idx1-ubyte").write_bytes(lab)
        spec = circles_sweep_spec(
            source={"kind": "real", "dataset": "kmnist", "grouping": "kmnist_default",
                    "data_dir": str(tmp_path)},
            values=[32, 64],
            test_size=50,
            replicates=2,
        )
        result = sweep(spec)
        assert all(len(p.records) == 2 for p in result.points)
        assert result.points[0].records[0].p == 32
