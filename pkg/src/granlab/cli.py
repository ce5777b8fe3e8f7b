"""Command-line surface: generate, run, sweep, plot.

Exit codes: 0 success, 1 runtime failure (divergence, I/O, malformed
inputs), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .circles import CircleSpec, generate_circles, redundancy_of
from .dataset import load_dataset, save_dataset, subsample
from .exceptions import ConfigError, DataError, DivergenceError, ParseError
from .harness import (
    ExperimentSpec,
    PointConfig,
    PointResult,
    batch_size_for,
    persist,
    run_comparison,
    summarize_point,
    sweep,
)
from .model import match_capacity
from .realdata import load_grouped
from .svgplot import write_plot
from .training import TrainConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="granlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate or ingest a dataset")
    gen.add_argument("--circles", type=int, metavar="K", help="number of concentric circles")
    gen.add_argument("--n", type=int, default=5000, help="number of points (circles mode)")
    gen.add_argument("--rho", type=float, default=0.0, help="boundary redundancy in [0, 1-2/K]")
    gen.add_argument("--jitter", type=float, default=None, help="radial jitter half-width")
    gen.add_argument("--sector-offset", type=float, default=0.0,
                     help="dominant-sector rotation per circle, radians")
    gen.add_argument("--dataset", choices=["mnist", "kmnist", "fmnist", "cifar10"])
    gen.add_argument("--grouping", help="grouping preset name or JSON file")
    gen.add_argument("--data-dir", default=None,
                     help="dataset directory (default: $GRANLAB_DATA_DIR)")
    gen.add_argument("--split", choices=["train", "test"], default="train")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output path (.json or .npz)")

    run = sub.add_parser("run", help="one paired fine/coarse comparison")
    run.add_argument("--data", required=True, help="serialized dataset (.json/.npz)")
    run.add_argument("--test-data", default=None,
                     help="test dataset; default holds out part of --data")
    run.add_argument("--fine-hidden", type=int, required=True)
    group = run.add_mutually_exclusive_group()
    group.add_argument("--coarse-hidden", type=int, default=None)
    group.add_argument("--match-capacity", action="store_true",
                       help="derive the coarse width from the fine one")
    run.add_argument("--train-size", type=int, default=None,
                     help="subsample size (default: the whole training pool)")
    run.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
    run.add_argument("--lr-start", type=float, default=None)
    run.add_argument("--lr-end", type=float, default=None)
    run.add_argument("--epochs", type=int, default=300)
    run.add_argument("--patience", type=int, default=20)
    run.add_argument("--batch-size", type=int, default=None, help="default: size-based rule")
    run.add_argument("--beta", type=float, default=None,
                     help="train the fine model on the hybrid loss with this weight")
    run.add_argument("--activation", choices=["relu", "tanh"], default="relu")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default=None, help="directory for the run record JSON")

    swp = sub.add_parser("sweep", help="run an experiment spec")
    swp.add_argument("--spec", required=True, help="ExperimentSpec JSON file")
    swp.add_argument("--out", default="results", help="output directory")
    swp.add_argument("--workers", type=int, default=None,
                     help="parallel replicates per point (overrides the spec)")

    plot = sub.add_parser("plot", help="render a sweep CSV to SVG")
    plot.add_argument("--csv", required=True)
    plot.add_argument("--style", choices=["accuracy_vs_size", "delta_vs_axis"], required=True)
    plot.add_argument("--out", required=True)
    return parser


def _cmd_generate(args) -> int:
    if (args.circles is None) == (args.dataset is None):
        raise ConfigError("choose exactly one of --circles or --dataset")
    if args.circles is not None:
        spec = CircleSpec(
            k=args.circles,
            n_points=args.n,
            rho=args.rho,
            radial_jitter=args.jitter,
            sector_offset_per_circle=args.sector_offset,
            seed=args.seed,
        )
        data = generate_circles(spec)
        measured = redundancy_of(data)
    else:
        if not args.grouping:
            raise ConfigError("--dataset needs --grouping")
        data_dir = args.data_dir or os.environ.get("GRANLAB_DATA_DIR", ".")
        data = load_grouped(args.dataset, args.grouping, data_dir, args.split)
        measured = float("nan")
    path = save_dataset(data, args.out)
    line = f"name={data.name} K={data.k} P={data.p} d={data.d}"
    if measured == measured:
        line += f" redundancy={measured:.4f}"
    print(f"{line} -> {path}")
    return 0


def _cmd_run(args) -> int:
    pool = load_dataset(args.data)
    if args.test_data:
        test_data = load_dataset(args.test_data)
        train_pool = pool
    else:
        # hold out up to a quarter of the data (at most 10^4 points) for testing
        hold = min(10_000, max(1, pool.p // 4))
        import numpy as np

        perm = np.random.default_rng(args.seed ^ 0x5EED).permutation(pool.p)
        test_data = pool.take(np.sort(perm[:hold]))
        train_pool = pool.take(np.sort(perm[hold:]))

    train_size = args.train_size or train_pool.p
    if train_size > train_pool.p:
        raise DataError(
            f"--train-size {train_size} exceeds the available pool of {train_pool.p}"
        )
    if args.match_capacity or args.coarse_hidden is None:
        coarse_hidden = match_capacity(args.fine_hidden, train_pool.d, train_pool.k)
    else:
        coarse_hidden = args.coarse_hidden

    cfg = TrainConfig(
        optimizer=args.optimizer,
        max_epochs=args.epochs,
        early_stop_patience=args.patience,
        batch_size=args.batch_size or batch_size_for(train_size),
        seed=args.seed,
    )
    if args.optimizer == "adam":
        cfg = replace(cfg, lr_start=0.001, lr_end=0.001)
    if args.lr_start is not None:
        cfg = replace(cfg, lr_start=args.lr_start, lr_end=args.lr_end or args.lr_start)
    cfg.validate()

    from .losses import FINE, hybrid

    point = PointConfig(
        axis_value=float(train_size),
        train_size=train_size,
        fine_hidden=args.fine_hidden,
        coarse_hidden=coarse_hidden,
        fine_loss=hybrid(args.beta) if args.beta is not None else FINE,
        config=cfg,
        activation=args.activation,
    )
    record = run_comparison(train_pool, test_data, point, args.seed)
    print(
        f"acc_fine={record.acc_fine_test:.4f} acc_coarse={record.acc_coarse_test:.4f} "
        f"delta={record.delta_test:+.4f} epochs={record.epochs_fine}/{record.epochs_coarse}"
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"run_seed{args.seed}.json"
        path.write_text(json.dumps(record.to_dict(), indent=1))
        print(f"record -> {path}")
    return 0


def _cmd_sweep(args) -> int:
    spec_path = Path(args.spec)
    if not spec_path.exists():
        raise ConfigError(f"spec file not found: {spec_path}")
    spec = ExperimentSpec.from_json(spec_path.read_text())
    if args.workers is not None:
        spec.workers = args.workers
    spec.validate()

    def progress(point, records, failures):
        note = f" ({len(failures)} failed)" if failures else ""
        if records:
            row = summarize_point(PointResult(point.axis_value, records, failures),
                                  spec.aggregate_mode)
            print(
                f"axis={point.axis_value:g} acc_fine={row['acc_fine']:.4f} "
                f"acc_coarse={row['acc_coarse']:.4f} delta={row['delta']:+.4f} "
                f"replicates={len(records)}{note}"
            )
        else:
            print(f"axis={point.axis_value:g} all {len(failures)} replicates failed")

    result = sweep(spec, progress=progress)
    if any(not p.records for p in result.points):
        print("error: at least one sweep point has no successful replicates", file=sys.stderr)
        persist(result, args.out)
        return 1
    csv_path, json_path = persist(result, args.out)
    print(f"results -> {csv_path}, {json_path}")
    return 0


def _cmd_plot(args) -> int:
    out = write_plot(args.csv, args.style, args.out)
    print(f"plot -> {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "generate": _cmd_generate,
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "plot": _cmd_plot,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ParseError, DivergenceError, FileNotFoundError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
