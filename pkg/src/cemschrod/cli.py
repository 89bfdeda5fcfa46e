"""Command-line entry point: ``cemschrod {solve,table,decay,spectra,dump-potential}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import experiments as ex
from .problems import write_cell_map


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI-style experiment config")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--seed", type=int, default=None, help="override the inclusion seed")
    common.add_argument("--dry-run", action="store_true", help="print the resolved plan and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cemschrod", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="one CN-CEM run against its reference")
    t = sub.add_parser("table", parents=[common], help="run a named parameter sweep")
    t.add_argument("--table", required=True, choices=sorted(ex.SWEEPS))
    d = sub.add_parser("decay", parents=[common], help="basis localization error versus layers")
    d.add_argument("--element", type=int, default=None, help="coarse element (default: centre)")
    d.add_argument("--basis", type=int, default=0, help="basis index within the element")
    d.add_argument("--layers", type=str, default="1,2,3,4", help="comma-separated layer counts")
    sub.add_parser("spectra", parents=[common], help="local eigenvalues and Lambda")
    sub.add_parser("dump-potential", parents=[common], help="potential at fine-element centres as a cell map")
    return p


def _load(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.from_file(args.config) if args.config else ex.ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _print_plan(resolved: list) -> None:
    for r in resolved:
        print(json.dumps(r, sort_keys=True, default=str))


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return _dispatch(args, argv)
    except (ex.ExperimentError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args, argv) -> int:
    out = args.out
    if args.command == "table":
        configs = ex.sweep_configs(args.table, seed=args.seed)
        resolved = ex.plan(configs)
        if args.dry_run:
            _print_plan(resolved)
            return 0
        rows = ex.run_sweep(args.table, threads=args.threads, seed=args.seed, out_dir=out)
        path = ex.write_outputs(out, f"{args.table}.csv", rows, "table", resolved, argv)
        print(path)
        return 0

    cfg = _load(args)
    resolved = [cfg.resolved()]
    if args.dry_run:
        _print_plan(resolved)
        return 0

    if args.command == "solve":
        rows = ex.run_experiment(cfg, threads=args.threads, out_dir=out)
        path = ex.write_outputs(out, os.path.basename(cfg.csv), rows, "solve", resolved, argv)
        print(path)
    elif args.command == "decay":
        layers = [int(x) for x in args.layers.split(",") if x.strip()]
        _, theta, text = ex.run_decay(cfg, args.element, args.basis, layers, threads=args.threads)
        out.mkdir(parents=True, exist_ok=True)
        (out / "decay.csv").write_text(text)
        ex.write_manifest(out, "decay", resolved, argv)
        print(out / "decay.csv")
    elif args.command == "spectra":
        out.mkdir(parents=True, exist_ok=True)
        (out / "spectra.csv").write_text(ex.run_spectra(cfg))
        ex.write_manifest(out, "spectra", resolved, argv)
        print(out / "spectra.csv")
    elif args.command == "dump-potential":
        out.mkdir(parents=True, exist_ok=True)
        write_cell_map(out / "potential.txt", ex.potential_cell_values(cfg))
        ex.write_manifest(out, "dump-potential", resolved, argv)
        print(out / "potential.txt")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
