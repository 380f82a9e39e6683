"""Command-line interface.

    qlink run --preset fig16 --out results/ --format csv --trials 25 --seed 42
    qlink run --config experiment.conf --set total_length_km=15 --out results/
    qlink oracle purification --scheme ds-sp

Exit codes: 0 success, 2 configuration error, 3 runtime abort.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .config import (
    ConfigurationError,
    PRESETS,
    PresetPoint,
    emit_results,
    load_config,
    preset_points,
)
from .purification import CircuitSpec, Scheme, truth_table
from .runner import run_point, run_preset
from .trial import TrialAbort, run_trial


def _parse_set(items):
    overrides = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    return overrides


def _cmd_run(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    jobs = args.jobs or os.cpu_count() or 1
    if args.preset:
        series = args.series.split(",") if args.series else None
        sweep = [float(v) for v in args.sweep.split(",")] if args.sweep else None
        rows = run_preset(
            args.preset,
            trials=args.trials,
            seed_base=args.seed,
            jobs=jobs,
            series=series,
            sweep_values=sweep,
        )
        name = args.preset
        meta = {
            "preset": name,
            "seed_base": args.seed if args.seed is not None else 1,
            "trials": args.trials if args.trials is not None else 25,
        }
    else:
        cfg = load_config(args.config, _parse_set(args.set))
        if args.trials is not None:
            cfg.trials = args.trials
        if args.seed is not None:
            cfg.seed_base = args.seed
        point = PresetPoint("custom", "n_measurements", cfg.n_measurements, cfg)
        row, results = run_point("custom", point, jobs=jobs)
        rows = [row]
        name = "custom"
        meta = {"config_hash": cfg.config_hash(), "seed_base": cfg.seed_base,
                "trials": cfg.trials}
        trials_path = os.path.join(args.out, f"{name}_trials.json")
        with open(trials_path, "w", encoding="utf-8") as fh:
            json.dump([json.loads(r.to_json()) for r in results], fh, sort_keys=True, indent=1)
        resolved = os.path.join(args.out, f"{name}_config.txt")
        with open(resolved, "w", encoding="utf-8") as fh:
            for k, v in cfg.flat().items():
                fh.write(f"{k}={v}\n")
    out_path = os.path.join(args.out, f"{name}_results.{args.format}")
    emit_results(rows, args.format, out_path, meta)
    print(out_path)
    return 0


def _cmd_oracle(args) -> int:
    if args.component != "purification":
        raise ConfigurationError(f"unknown oracle component {args.component!r}")
    spec = CircuitSpec(Scheme(args.scheme), args.first.upper())
    lines = ["inputs,success,kept_label"]
    names = "IXZY"
    for labels, success, kept in truth_table(spec):
        joint = "".join(names[l] for l in labels)
        lines.append(f"{joint},{int(success)},{names[kept] if kept is not None else ''}")
    text = "\n".join(lines) + "\n"
    if args.out and args.out != "-":
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlink", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset sweep or a custom configuration")
    run.add_argument("--preset", choices=sorted(PRESETS), help="named experiment sweep")
    run.add_argument("--config", help="flat key=value configuration file")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a configuration key (repeatable; wins over the file)")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--trials", type=int, default=None)
    run.add_argument("--seed", type=int, default=None, help="seed base; trial i uses seed+i")
    run.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    run.add_argument("--series", help="comma list restricting preset series")
    run.add_argument("--sweep", help="comma list restricting sweep values")

    oracle = sub.add_parser("oracle", help="dump exact truth tables")
    oracle.add_argument("component", choices=("purification",))
    oracle.add_argument("--scheme", required=True,
                        choices=[s.value for s in Scheme])
    oracle.add_argument("--first", default="x", choices=("x", "z"))
    oracle.add_argument("--out", default="-")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            if bool(args.preset) == bool(args.config):
                if not args.preset and not args.set:
                    raise ConfigurationError("need --preset, --config or --set")
            return _cmd_run(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (TrialAbort, AssertionError) as e:
        print(f"runtime abort: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
