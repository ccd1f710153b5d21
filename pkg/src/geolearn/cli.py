"""Command line entry points: run, sweep, validate, report."""

import argparse
import copy
import csv
import os
import sys
from dataclasses import fields

import yaml

from . import harness


def _load(path):
    cfg = harness.load_config(path)
    return cfg


def _override(cfg, param, value):
    """Set a config field by 'section.field' or bare field name."""
    if "." in param:
        section, name = param.split(".", 1)
        target = getattr(cfg, section, None)
        if target is None:
            raise SystemExit(f"unknown config section {section!r}")
    else:
        name = param
        target = None
        for section in ("algorithm", "model", "data", "partition",
                        "topology", "scout", "convergence"):
            candidate = getattr(cfg, section)
            if any(f.name == name for f in fields(candidate)):
                target = candidate
                break
        if target is None:
            raise SystemExit(f"no config section has a field named {name!r}")
    if not any(f.name == name for f in fields(target)):
        raise SystemExit(f"{type(target).__name__} has no field {name!r}")
    setattr(target, name, value)
    return cfg


def _print_summary(summary):
    sys.stdout.write(harness.summary_text(summary))


def cmd_run(args):
    cfg = _load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    errs = harness.validate_config(cfg)
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    result = harness.run_experiment(cfg)
    out_dir = args.out or cfg.out_dir
    if out_dir:
        harness.save_run(result, out_dir)
        print(f"wrote {out_dir}/metrics.csv")
    _print_summary(result.summary)
    return 0


def cmd_validate(args):
    try:
        cfg = _load(args.config)
    except (ValueError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    errs = harness.validate_config(cfg)
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    print("ok")
    return 0


def cmd_sweep(args):
    base = _load(args.config)
    values = [yaml.safe_load(v) for v in args.values.split(",")]
    out_root = args.out or base.out_dir or "sweep"
    rows = []
    for value in values:
        cfg = copy.deepcopy(base)
        _override(cfg, args.param, value)
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.name = f"{base.name}-{args.param}-{value}"
        errs = harness.validate_config(cfg)
        if errs:
            for e in errs:
                print(f"config error at {args.param}={value}: {e}",
                      file=sys.stderr)
            return 1
        result = harness.run_experiment(cfg)
        sub = os.path.join(out_root, f"{args.param.replace('.', '_')}={value}")
        harness.save_run(result, sub)
        row = {"value": value}
        row.update(result.summary)
        rows.append(row)
        print(f"{args.param}={value}: objective="
              f"{result.summary['final_objective']} "
              f"bytes={result.summary['total_bytes']} "
              f"cost={result.summary['cost_usd']}")
    os.makedirs(out_root, exist_ok=True)
    sweep_path = os.path.join(out_root, "sweep.csv")
    cols = list(rows[0].keys())
    with open(sweep_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            writer.writerow([harness._fmt(row.get(c)) for c in cols])
    print(f"wrote {sweep_path}")
    return 0


def cmd_report(args):
    summary_path = os.path.join(args.run_dir, "summary.txt")
    metrics_path = os.path.join(args.run_dir, "metrics.csv")
    if not os.path.exists(summary_path):
        print(f"no summary at {summary_path}", file=sys.stderr)
        return 1
    with open(summary_path) as fh:
        sys.stdout.write(fh.read())
    if os.path.exists(metrics_path):
        with open(metrics_path) as fh:
            lines = fh.read().splitlines()
        print(f"metrics rows: {max(0, len(lines) - 1)}")
        if len(lines) > 1:
            print("last row: " + lines[-1])
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="geolearn",
        description="communication-efficient training on a simulated WAN")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(fn=cmd_run)

    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(fn=cmd_validate)

    p_sweep = sub.add_parser("sweep", help="run a config across param values")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True,
                         help="field name, optionally section-qualified (algorithm.t0)")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_rep = sub.add_parser("report", help="print a finished run's summary")
    p_rep.add_argument("run_dir")
    p_rep.set_defaults(fn=cmd_report)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
