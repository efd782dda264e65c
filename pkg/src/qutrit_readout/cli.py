"""Command-line entry point.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import jsonio
from .config import ConfigError, build_config
from .evaluation import EvalReport, duration_sweep, per_qubit_fidelity, write_sweep_csv
from .pipeline import (
    DataError,
    NumericError,
    StageError,
    run_stage,
    check_compatible,
    classify,
    load_bundle,
    load_dataset,
    run_pipeline,
    simulate,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", type=Path, default=Path("."), help=out_help)
    p.add_argument("--threads", type=int, help="worker cap; results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qutrit-readout", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a dataset file")
    _common(p, "output directory (dataset.qrt is written there)")

    p = sub.add_parser("pipeline", help="cluster, build the bank, train, evaluate")
    _common(p, "output directory")
    p.add_argument("--labels", choices=("cluster", "truth"), help="training label source")
    p.add_argument("--n-keep", type=_int_list, help="sweep sample counts, e.g. 100,200,300")
    p.add_argument("--dataset", type=Path, help="reuse an existing dataset instead of simulating")

    p = sub.add_parser("classify", help="label every shot of a dataset with a trained bundle")
    _common(p, "output CSV path")
    p.add_argument("bundle", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--n-keep", type=int, help="samples kept per trace (default: full length)")
    p.add_argument("--split", choices=("all", "train", "val", "test"), default="all")

    p = sub.add_parser("sweep", help="evaluate a bundle at several readout lengths, no retraining")
    _common(p, "output directory (sweep.csv)")
    p.add_argument("bundle", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--n-keep", type=_int_list, default=(100, 200, 300, 400, 500))

    p = sub.add_parser("report", help="re-render report tables from a report.json")
    _common(p, "output directory for the CSV tables")
    p.add_argument("report", type=Path)
    return parser


def cmd_simulate(args) -> int:
    cfg = build_config(args.config, {"seed": args.seed, "threads": args.threads})
    args.out.mkdir(parents=True, exist_ok=True)
    ds, path = run_stage("simulate", simulate, cfg, args.out)
    print(f"shots: {len(ds)} ({len(ds.states)} states x {ds.shots_per_state})")
    print(f"file: {path}")
    print(f"sha256: {jsonio.file_sha256(path)}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    overrides = {"seed": args.seed, "threads": args.threads, "labels": args.labels, "sweep": args.n_keep}
    if args.dataset is not None:
        overrides["dataset"] = str(args.dataset.resolve())
    cfg = build_config(args.config, overrides)
    result = run_pipeline(cfg, args.out)
    rep = result.report
    for name in rep.methods:
        fids = " ".join(f"{f:.4f}" for f in rep.fidelities(name))
        print(f"{name:4s} mean {rep.mean_fidelity(name):.4f}  geomean {rep.geomean(name):.4f}  [{fids}]")
    for row in rep.sweep:
        print(f"n_keep {row['n_keep']:4d}  mean fidelity {row['mean_fidelity']:.4f}")
    for name, digest in sorted(result.hashes.items()):
        print(f"{digest}  {name}")
    return EXIT_OK


def cmd_classify(args) -> int:
    bundle, bank = load_bundle(args.bundle)
    ds = load_dataset(args.dataset)
    check_compatible(bundle, bank, ds, args.n_keep)
    idx = np.arange(len(ds)) if args.split == "all" else ds.indices(args.split)
    labels, probs = classify(bundle, bank, ds, args.n_keep, idx)
    out = args.out if args.out.suffix else args.out / "labels.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    n = bundle.n_qubits
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["shot"] + [f"q{q}" for q in range(n)] + [f"p{q}_{lvl}" for q in range(n) for lvl in range(3)])
        for k, lab, pr in zip(idx, labels, probs):
            w.writerow([int(k), *lab.tolist(), *(format(float(x), ".17g") for x in pr.ravel())])
    _, fids = per_qubit_fidelity(labels, ds.initial_levels[idx])
    print(f"classified {len(idx)} shots -> {out}")
    print("accuracy vs ground truth: " + " ".join(f"{f:.4f}" for f in fids))
    return EXIT_OK


def cmd_sweep(args) -> int:
    bundle, bank = load_bundle(args.bundle)
    ds = load_dataset(args.dataset)
    check_compatible(bundle, bank, ds, max(args.n_keep))
    te = ds.indices("test")
    rows = duration_sweep(ds, bank, bundle.mlps, args.n_keep, te, ds.initial_levels[te], workers=args.threads or 1)
    args.out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, args.out / "sweep.csv")
    for r in rows:
        print(f"n_keep {r['n_keep']:4d}  {r['duration_ns']:7.1f} ns  mean fidelity {r['mean_fidelity']:.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        rep = EvalReport.from_dict(jsonio.load(args.report))
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read report {args.report}: {exc}") from exc
    hashes = rep.write(args.out)
    for name in rep.methods:
        print(f"{name:4s} mean {rep.mean_fidelity(name):.4f}  geomean {rep.geomean(name):.4f}")
    for name, digest in sorted(hashes.items()):
        print(f"{digest}  {name}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "pipeline": cmd_pipeline,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except StageError as exc:
        if isinstance(exc.cause, ConfigError):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
