"""
Command line entry point::

    isopde run CONFIG.toml [--out-dir DIR] [--seed N] [--jobs N] [--quiet]
    isopde validate CONFIG.toml
    isopde suite [--out-dir DIR] [--seed N] [--jobs N] [--quiet]
    isopde plot RECORD.json [--out-dir DIR]

The exit code is 0 only when every scenario passes.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from importlib import resources

from ..errors import ConfigError
from .config import config_from_dict, validate_config
from .runner import ExperimentRecord, run

log = logging.getLogger("isopde")


def bundled_configs() -> list:
    """Paths of the acceptance scenario configs shipped with the package."""
    root = resources.files("isopde.harness") / "scenarios"
    return sorted(str(p) for p in root.iterdir() if p.name.endswith(".toml"))


def _load(path, seed=None):
    with open(path, encoding="utf-8") as fh:
        cfg = validate_config(fh.read())
    if seed is not None:
        raw = dict(cfg.raw, seed=seed)
        cfg = config_from_dict(raw)
    return cfg


def _report(record: ExperimentRecord, quiet: bool):
    if quiet:
        return
    for a in record.assertions:
        print(f"  {'PASS' if a['passed'] else 'FAIL'}  {a['name']}  {a['detail']}")
    if record.error:
        print(f"  ERROR {record.error}")
    print(f"{record.name}: {record.status} ({record.wall_time_ms / 1e3:.1f} s)")


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config, args.seed)
    except ConfigError as exc:
        print("\n".join(f"config error: {m}" for m in exc.messages), file=sys.stderr)
        return 2
    record = run(cfg, args.out_dir, args.jobs)
    _report(record, args.quiet)
    return 0 if record.passed else 1


def cmd_validate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = validate_config(fh.read())
    except ConfigError as exc:
        print("\n".join(f"config error: {m}" for m in exc.messages), file=sys.stderr)
        return 2
    if not args.quiet:
        print(f"{args.config}: ok ({cfg.scenario}, hash {cfg.config_hash()})")
    return 0


def cmd_suite(args) -> int:
    status = 0
    for path in bundled_configs():
        cfg = _load(path, args.seed)
        record = run(cfg, args.out_dir, args.jobs)
        _report(record, args.quiet)
        status |= 0 if record.passed else 1
    return status


def cmd_plot(args) -> int:
    from .plots import emit_plots

    with open(args.record, encoding="utf-8") as fh:
        data = json.load(fh)
    names = {f.name for f in dataclasses.fields(ExperimentRecord)}
    record = ExperimentRecord.from_dict({k: v for k, v in data.items() if k in names})
    out = args.out_dir or os.environ.get("ISOPDE_OUT") or os.path.dirname(os.path.abspath(args.record))
    paths = emit_plots(record, out)
    if not args.quiet:
        print("\n".join(paths))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help="output directory (default: $ISOPDE_OUT, then ./out)")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")
    solve = argparse.ArgumentParser(add_help=False)
    solve.add_argument("--seed", type=int, help="override the config seed")
    solve.add_argument("--jobs", type=int, default=1, metavar="N", help="grid levels run concurrently")

    p = argparse.ArgumentParser(prog="isopde", description="Symmetry experiments for semilinear PDE on warped annuli.")
    sub = p.add_subparsers(dest="verb", required=True)
    s = sub.add_parser("run", parents=[common, solve], help="run one config")
    s.add_argument("config")
    s.set_defaults(func=cmd_run)
    s = sub.add_parser("validate", parents=[common], help="check a config without computing")
    s.add_argument("config")
    s.set_defaults(func=cmd_validate)
    s = sub.add_parser("suite", parents=[common, solve], help="run the bundled acceptance scenarios")
    s.set_defaults(func=cmd_suite)
    s = sub.add_parser("plot", parents=[common], help="redraw the SVG plots of a record")
    s.add_argument("record")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
