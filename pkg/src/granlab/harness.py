"""Experiment orchestration: paired fine/coarse runs, sweeps, aggregation,
and persistence to a CSV + JSON archive pair.

Every replicate derives its seed from the sweep seed and its (point,
replicate) coordinates, so re-running a spec reproduces every record.
Within one replicate both models see the identical training subsample.
Replicates of a point may run in parallel threads (workers > 1); results
are collected in replicate order, so parallelism never changes output.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .circles import CircleSpec, generate_circles
from .dataset import LabeledDataset, load_dataset, subsample
from .exceptions import ConfigError, DataError, DivergenceError
from .losses import COARSE, FINE, LossKind, aggregate_fine_to_coarse, hybrid
from .model import HEAD_SIGMOID, glorot_init, match_capacity, parameter_count, predict_probs
from .realdata import load_grouped
from .training import TrainConfig, train

SWEEP_AXES = ("train_size", "hidden_neurons", "redundancy", "beta", "param_data_ratio")
CSV_COLUMNS = (
    "axis_value", "acc_fine", "acc_coarse", "delta", "spread_low", "spread_high",
    "n_over_p", "replicates",
    "acc_fine_low", "acc_fine_high", "acc_coarse_low", "acc_coarse_high", "failures",
)


def coarse_accuracy(predicted: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of correct coarse predictions; a prediction of exactly 0.5
    counts as class 1."""
    predicted = np.asarray(predicted, dtype=float).reshape(-1)
    labels = np.asarray(labels, dtype=float).reshape(-1)
    if predicted.size == 0:
        raise DataError("empty batch")
    if predicted.shape != labels.shape:
        raise DataError(f"got {predicted.size} predictions but {labels.size} labels")
    return float(np.mean((predicted >= 0.5) == (labels == 1.0)))


def batch_size_for(train_size: int) -> int:
    """Piecewise batch-size rule: 8 up to 800 samples, 16 up to 6400, else 32."""
    if train_size < 1:
        raise ConfigError("train_size must be >= 1")
    if train_size <= 800:
        return 8
    if train_size <= 6400:
        return 16
    return 32


def aggregate(values, mode: str):
    """Summaries over replicate values.

    quartiles       -> (median, q1, q3), linear-interpolation quantiles
    standard_error  -> (mean, s / sqrt(R)) with s the ddof=1 deviation
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise DataError("cannot aggregate an empty list")
    if mode == "quartiles":
        q1, med, q3 = np.quantile(values, [0.25, 0.5, 0.75])
        return float(med), float(q1), float(q3)
    if mode == "standard_error":
        if values.size < 2:
            raise DataError("standard error needs at least two values")
        return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))
    raise ConfigError(f"unknown aggregation mode {mode!r}")


@dataclass
class RunRecord:
    replicate: int
    seed: int
    acc_fine_test: float
    acc_coarse_test: float
    acc_fine_train: float
    acc_coarse_train: float
    loss_fine: float
    loss_coarse: float
    epochs_fine: int
    epochs_coarse: int
    n_fine: int
    n_coarse: int
    p: int

    @property
    def delta_test(self) -> float:
        return self.acc_fine_test - self.acc_coarse_test

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunRecord":
        return cls(**doc)


@dataclass
class ExperimentSpec:
    """Everything a sweep needs, JSON-serializable.

    source: {"kind": "circles", ...CircleSpec fields} generates data;
            {"kind": "real", "dataset": ..., "grouping": ..., "data_dir": ...}
            loads official files; {"kind": "file", "path": ...} loads a
            serialized dataset (train pool; test drawn from the remainder).
    axis "param_data_ratio" takes [train_size, fine_hidden] pairs as values
    and reports n/p as the axis coordinate.
    """

    name: str
    source: dict
    axis: str
    values: list
    fine_hidden: int = 10
    coarse_hidden: int | None = None  # None -> match_capacity
    train_size: int | None = None     # required unless axis == train_size
    test_size: int = 10_000
    replicates: int = 30
    seed: int = 0
    activation: str = "relu"
    fine_loss: str = "fine"           # "fine" or "hybrid"
    beta: float = 1.0                 # hybrid weight when fine_loss == "hybrid"
    train: dict = field(default_factory=dict)  # TrainConfig overrides; batch_size omitted -> rule
    aggregate_mode: str = "standard_error"
    workers: int = 1

    def validate(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("values must be non-empty")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.aggregate_mode not in ("quartiles", "standard_error"):
            raise ConfigError(f"unknown aggregate_mode {self.aggregate_mode!r}")
        if self.axis != "param_data_ratio":
            vals = [float(v) for v in self.values]
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError("axis values must be strictly increasing")
        if self.axis not in ("train_size", "param_data_ratio") and self.train_size is None:
            raise ConfigError(f"train_size is required when sweeping {self.axis}")
        if self.axis == "redundancy" and self.source.get("kind") != "circles":
            raise ConfigError("the redundancy axis needs a circles source")
        if self.fine_loss not in ("fine", "hybrid"):
            raise ConfigError(f"fine_loss must be 'fine' or 'hybrid', got {self.fine_loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class PointConfig:
    """Fully resolved settings for one sweep point."""

    axis_value: float
    train_size: int
    fine_hidden: int
    coarse_hidden: int
    fine_loss: LossKind
    config: TrainConfig
    activation: str


@dataclass
class PointResult:
    axis_value: float
    records: list[RunRecord]
    failures: list[dict]


@dataclass
class SweepResult:
    spec: ExperimentSpec
    points: list[PointResult]


def replicate_seed(spec_seed: int, point_index: int, replicate: int) -> int:
    """Deterministic, pairwise-distinct seed for one replicate."""
    ss = np.random.SeedSequence(spec_seed, spawn_key=(point_index, replicate))
    return int(ss.generate_state(1, np.uint64)[0])


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


def run_comparison(pool: LabeledDataset, test_data: LabeledDataset, point: PointConfig,
                   seed: int, replicate: int = 0) -> RunRecord:
    """Train one fine and one coarse model on the same subsample and score both."""
    sub_seed = _derived_seed(seed, 0)
    fine_init, coarse_init = _derived_seed(seed, 1), _derived_seed(seed, 2)
    fine_train, coarse_train = _derived_seed(seed, 3), _derived_seed(seed, 4)

    train_set = pool if point.train_size == pool.p else subsample(pool, point.train_size, sub_seed)
    d, k = train_set.d, train_set.k

    fine_model = glorot_init(d, point.fine_hidden, k, fine_init, point.activation)
    fine_model, fine_log = train(
        fine_model, train_set, replace(point.config, seed=fine_train), point.fine_loss
    )
    coarse_model = glorot_init(d, point.coarse_hidden, 1, coarse_init, point.activation)
    coarse_model, coarse_log = train(
        coarse_model, train_set, replace(point.config, seed=coarse_train), COARSE
    )

    def coarse_pred(model, data):
        probs = predict_probs(model, data.features)
        if model.head == HEAD_SIGMOID:
            return probs[:, 0]
        return aggregate_fine_to_coarse(probs, data.hierarchy)

    y_train = train_set.coarse_labels()
    y_test = test_data.coarse_labels()
    return RunRecord(
        replicate=replicate,
        seed=seed,
        acc_fine_test=coarse_accuracy(coarse_pred(fine_model, test_data), y_test),
        acc_coarse_test=coarse_accuracy(coarse_pred(coarse_model, test_data), y_test),
        acc_fine_train=coarse_accuracy(coarse_pred(fine_model, train_set), y_train),
        acc_coarse_train=coarse_accuracy(coarse_pred(coarse_model, train_set), y_train),
        loss_fine=fine_log.train_loss[fine_log.best_epoch],
        loss_coarse=coarse_log.train_loss[coarse_log.best_epoch],
        epochs_fine=fine_log.epochs_run,
        epochs_coarse=coarse_log.epochs_run,
        n_fine=parameter_count(fine_model),
        n_coarse=parameter_count(coarse_model),
        p=train_set.p,
    )


def _circle_spec_from(source: dict, **overrides) -> CircleSpec:
    fields = {key: source[key] for key in ("k", "n_points", "rho", "radial_jitter",
                                           "sector_offset_per_circle", "seed") if key in source}
    fields.update(overrides)
    return CircleSpec(**fields)


def _point_data(spec: ExperimentSpec, axis_value, cache: dict) -> tuple[LabeledDataset, LabeledDataset]:
    """Train pool and fixed test set for one point. Cached unless the axis
    changes the data itself (redundancy)."""
    rho = float(axis_value) if spec.axis == "redundancy" else None
    key = rho
    if key in cache:
        return cache[key]
    kind = spec.source.get("kind")
    pool_seed = _derived_seed(spec.seed, 100)
    test_seed = _derived_seed(spec.seed, 101)
    if kind == "circles":
        base = dict(spec.source)
        if rho is not None:
            base["rho"] = rho
        pool = generate_circles(_circle_spec_from(base, seed=pool_seed))
        test = generate_circles(_circle_spec_from(base, n_points=spec.test_size, seed=test_seed))
    elif kind == "real":
        data_dir = spec.source.get("data_dir") or None
        if data_dir is None:
            import os

            data_dir = os.environ.get("GRANLAB_DATA_DIR", ".")
        pool = load_grouped(spec.source["dataset"], spec.source["grouping"], data_dir, "train")
        test_full = load_grouped(spec.source["dataset"], spec.source["grouping"], data_dir, "test")
        size = min(spec.test_size, test_full.p)
        test = test_full if size == test_full.p else subsample(test_full, size, test_seed)
    elif kind == "file":
        full = load_dataset(spec.source["path"])
        # hold out a fixed-seed test split, train pool is the remainder
        size = min(spec.test_size, max(1, full.p // 4))
        rng = np.random.default_rng(test_seed)
        perm = rng.permutation(full.p)
        test = full.take(np.sort(perm[:size]))
        pool = full.take(np.sort(perm[size:]))
    else:
        raise ConfigError(f"unknown source kind {kind!r}")
    cache[key] = (pool, test)
    return cache[key]


def resolve_point(spec: ExperimentSpec, axis_value, pool: LabeledDataset) -> PointConfig:
    train_size = spec.train_size
    fine_hidden = spec.fine_hidden
    if spec.axis == "train_size":
        train_size = int(axis_value)
    elif spec.axis == "hidden_neurons":
        fine_hidden = int(axis_value)
    elif spec.axis == "param_data_ratio":
        train_size, fine_hidden = int(axis_value[0]), int(axis_value[1])
    if train_size is None or train_size < 1:
        raise ConfigError("train_size must be a positive integer")
    if train_size > pool.p:
        raise DataError(f"train_size {train_size} exceeds the pool of {pool.p} samples")

    beta = float(axis_value) if spec.axis == "beta" else spec.beta
    if spec.axis == "beta" or spec.fine_loss == "hybrid":
        fine_loss = hybrid(beta)
    else:
        fine_loss = FINE

    coarse_hidden = spec.coarse_hidden
    if coarse_hidden is None:
        coarse_hidden = match_capacity(fine_hidden, pool.d, pool.k)

    overrides = dict(spec.train)
    if "batch_size" not in overrides:
        overrides["batch_size"] = batch_size_for(train_size)
    cfg = TrainConfig(**overrides)
    cfg.validate()

    n_fine = fine_hidden * (pool.d + 1) + pool.k * (fine_hidden + 1)
    coord = n_fine / train_size if spec.axis == "param_data_ratio" else float(axis_value)
    return PointConfig(
        axis_value=coord,
        train_size=train_size,
        fine_hidden=fine_hidden,
        coarse_hidden=coarse_hidden,
        fine_loss=fine_loss,
        config=cfg,
        activation=spec.activation,
    )


def sweep(spec: ExperimentSpec, progress=None) -> SweepResult:
    """Run replicates for every axis value; failures are recorded, not fatal."""
    spec.validate()
    cache: dict = {}
    points = []
    for point_index, axis_value in enumerate(spec.values):
        pool, test_data = _point_data(spec, axis_value, cache)
        point = resolve_point(spec, axis_value, pool)

        def one(replicate: int):
            seed = replicate_seed(spec.seed, point_index, replicate)
            return run_comparison(pool, test_data, point, seed, replicate)

        records, failures = [], []
        if spec.workers > 1:
            with ThreadPoolExecutor(max_workers=spec.workers) as pool_exec:
                futures = [pool_exec.submit(one, r) for r in range(spec.replicates)]
                outcomes = []
                for r, fut in enumerate(futures):
                    try:
                        outcomes.append(fut.result())
                    except DivergenceError as err:
                        outcomes.append({"replicate": r, "error": str(err), "epoch": err.epoch})
        else:
            outcomes = []
            for r in range(spec.replicates):
                try:
                    outcomes.append(one(r))
                except DivergenceError as err:
                    outcomes.append({"replicate": r, "error": str(err), "epoch": err.epoch})
        for outcome in outcomes:
            (records if isinstance(outcome, RunRecord) else failures).append(outcome)
        points.append(PointResult(point.axis_value, records, failures))
        if progress is not None:
            progress(point, records, failures)
    return SweepResult(spec, points)


def summarize_point(point: PointResult, mode: str) -> dict:
    """One CSV row. The delta column is always the mean per-run delta; the
    shared spread columns belong to the delta, the per-series ones to each
    accuracy."""
    if not point.records:
        raise DataError(f"no successful replicates at axis value {point.axis_value}")
    fine = np.array([r.acc_fine_test for r in point.records])
    coarse = np.array([r.acc_coarse_test for r in point.records])
    deltas = fine - coarse
    n_over_p = point.records[0].n_fine / point.records[0].p
    if mode == "quartiles":
        f_c, f_lo, f_hi = aggregate(fine, mode)
        c_c, c_lo, c_hi = aggregate(coarse, mode)
        _, d_lo, d_hi = aggregate(deltas, mode)
    else:
        f_c, f_se = aggregate(fine, mode)
        c_c, c_se = aggregate(coarse, mode)
        _, d_se = aggregate(deltas, mode)
        f_lo, f_hi = f_c - f_se, f_c + f_se
        c_lo, c_hi = c_c - c_se, c_c + c_se
        d_lo, d_hi = float(deltas.mean()) - d_se, float(deltas.mean()) + d_se
    return {
        "axis_value": point.axis_value,
        "acc_fine": f_c,
        "acc_coarse": c_c,
        "delta": float(deltas.mean()),
        "spread_low": d_lo,
        "spread_high": d_hi,
        "n_over_p": n_over_p,
        "replicates": len(point.records),
        "acc_fine_low": f_lo,
        "acc_fine_high": f_hi,
        "acc_coarse_low": c_lo,
        "acc_coarse_high": c_hi,
        "failures": len(point.failures),
    }


def _format_value(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def write_csv(result: SweepResult, path: Path) -> None:
    mode = result.spec.aggregate_mode
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    buf = io.StringIO()
    buf.write(f"# granlab-sweep-csv/1 name={result.spec.name} aggregate={mode} generated={stamp}\n")
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for point in result.points:
        if not point.records:
            continue
        row = summarize_point(point, mode)
        writer.writerow([_format_value(row[col]) for col in CSV_COLUMNS])
    path.write_text(buf.getvalue())


def read_csv_rows(path: Path) -> list[dict]:
    """Parse a sweep CSV back into row dicts; raises ParseError with the
    offending line number."""
    from .exceptions import ParseError

    rows = []
    lines = Path(path).read_text().splitlines()
    data_lines = [(i + 1, line) for i, line in enumerate(lines) if line and not line.startswith("#")]
    if not data_lines:
        raise ParseError(f"{path}: no header row")
    header = next(csv.reader([data_lines[0][1]]))
    for lineno, line in data_lines[1:]:
        fields = next(csv.reader([line]))
        if len(fields) != len(header):
            raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(fields)}")
        row = {}
        for key, text in zip(header, fields):
            try:
                row[key] = float(text)
            except ValueError as err:
                raise ParseError(f"{path}: line {lineno}: bad number {text!r} in {key}") from err
        rows.append(row)
    return rows


def persist(result: SweepResult, out_dir: str | Path, basename: str | None = None) -> tuple[Path, Path]:
    """Write <name>.csv (aggregated points) and <name>.json (full archive)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        base = basename or result.spec.name
        csv_path = out / f"{base}.csv"
        json_path = out / f"{base}.json"
        write_csv(result, csv_path)
        doc = {
            "schema": "granlab.sweep/1",
            "spec": result.spec.to_dict(),
            "points": [
                {
                    "axis_value": p.axis_value,
                    "records": [r.to_dict() for r in p.records],
                    "failures": p.failures,
                }
                for p in result.points
            ],
        }
        json_path.write_text(json.dumps(doc, indent=1))
    except OSError as err:
        raise OSError(f"cannot persist sweep to {out}: {err}") from err
    return csv_path, json_path


def load_archive(path: str | Path) -> SweepResult:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != "granlab.sweep/1":
        raise DataError(f"{path}: not a granlab.sweep/1 archive")
    spec = ExperimentSpec.from_dict(doc["spec"])
    points = [
        PointResult(
            axis_value=p["axis_value"],
            records=[RunRecord.from_dict(r) for r in p["records"]],
            failures=p["failures"],
        )
        for p in doc["points"]
    ]
    return SweepResult(spec, points)
