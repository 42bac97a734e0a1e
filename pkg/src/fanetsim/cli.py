"""Command line driver: ``fanetsim {run,sweep,trace,table}``.

Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import phy
from .config import (
    SweepParam,
    SweepSpec,
    check_sweep,
    keys_help,
    parse_config,
    parse_grid,
    parse_value,
    set_key,
)
from .engine import Simulator
from .errors import ConfigError, InvalidScenarioError
from .metrics import METRICS, format_number
from .model import ScenarioConfig
from .sweep import ENV_JOBS, ENV_OUT_DIR, default_out_dir, ensure_writable, run_sweep

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def _scenario_args(p):
    p.add_argument("--config", metavar="FILE", help="scenario file (key = value lines)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out-dir", metavar="DIR", help=f"output directory (env {ENV_OUT_DIR})")
    p.add_argument("--link-model", choices=("analytic", "threshold"), help="override the link model")
    p.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override any scenario key; repeatable",
    )


def build_parser() -> argparse.ArgumentParser:
    epilog = keys_help() + (
        f"\n\nenvironment:\n  {ENV_OUT_DIR}  default output directory"
        f"\n  {ENV_JOBS}     sweep worker processes (default: all cores)"
    )
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="fanetsim",
        description="Multi-token location sharing over an 802.11p link model.",
        epilog=epilog,
        formatter_class=fmt,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and print its metrics", epilog=epilog, formatter_class=fmt)
    _scenario_args(p)

    p = sub.add_parser("trace", help="run one scenario and write its event trace", epilog=epilog, formatter_class=fmt)
    _scenario_args(p)

    p = sub.add_parser("sweep", help="multi-seed sweep over one parameter", epilog=epilog, formatter_class=fmt)
    _scenario_args(p)
    p.add_argument("--param", help="swept parameter: " + ", ".join(x.value for x in SweepParam))
    p.add_argument("--grid", help="'a:b:step' (inclusive) or 'v1,v2,...'")
    p.add_argument("--repeats", type=int, help="runs per grid value")
    p.add_argument("--seed-base", type=int, help="first seed per grid value (default: scenario seed)")
    p.add_argument("--jobs", type=int, help=f"worker processes (env {ENV_JOBS}; default: all cores)")
    p.add_argument("--per-run", action="store_true", help="also write one CSV row per run")

    sub.add_parser("table", help="print the built-in MCS table")
    return parser


def load_scenario(args):
    """Scenario and optional inline sweep from ``--config`` plus overrides."""
    sweep = None
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text()
        except FileNotFoundError:
            raise _UsageError(f"config file not found: {path}") from None
        except OSError as e:
            raise _UsageError(f"cannot read config file {path}: {e.strerror}") from None
        config, sweep = parse_config(text)
    else:
        config = ScenarioConfig()
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise _UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key = key.strip().lower()
        try:
            config = set_key(config, key, parse_value(key, value))
        except InvalidScenarioError as e:
            raise ConfigError(str(e), key=key) from None
    if args.link_model:
        config = set_key(config, "link_model", parse_value("link_model", args.link_model))
    if args.seed is not None:
        config = config.with_(seed=args.seed)
    return config, sweep


def _report_lines(report):
    return [f"{m},{format_number(report.metric(m))}" for m in METRICS]


def _cmd_run(args, out):
    config, _ = load_scenario(args)
    out_dir = args.out_dir
    if out_dir is None and os.environ.get(ENV_OUT_DIR):
        out_dir = default_out_dir()
    if out_dir is not None:
        out_dir = ensure_writable(out_dir)
    report = Simulator(config).run()
    text = "metric,value\n" + "\n".join(_report_lines(report)) + "\n"
    out.write(text)
    if out_dir is not None:
        (out_dir / "run.csv").write_text(text)
    return EXIT_OK


def _cmd_trace(args, out):
    config, _ = load_scenario(args)
    out_dir = ensure_writable(args.out_dir or default_out_dir())
    trace, positions = [], []
    report = Simulator(config, trace=trace, position_trace=positions).run()
    (out_dir / "trace.txt").write_text("\n".join(trace) + "\n")
    (out_dir / "positions.txt").write_text("\n".join(positions) + "\n")
    (out_dir / "run.csv").write_text("metric,value\n" + "\n".join(_report_lines(report)) + "\n")
    out.write(f"{len(trace)} events -> {out_dir / 'trace.txt'}\n")
    return EXIT_OK


def _cmd_sweep(args, out):
    config, sweep = load_scenario(args)
    if args.param is not None or args.grid is not None:
        if args.param is None or args.grid is None:
            raise _UsageError("--param and --grid go together")
        param = SweepParam.parse(args.param)
        try:
            grid = parse_grid(args.grid, param.is_integer)
        except ValueError as e:
            raise ConfigError(str(e), key="grid") from None
        sweep = SweepSpec(param, grid, sweep.repeats if sweep else 1, sweep.seed_base if sweep else config.seed)
    if sweep is None:
        raise _UsageError("no sweep: give --param and --grid or put them in the config file")
    if args.repeats is not None:
        sweep = SweepSpec(sweep.parameter, sweep.grid, args.repeats, sweep.seed_base)
    seed_base = args.seed_base if args.seed_base is not None else (
        args.seed if args.seed is not None else sweep.seed_base
    )
    sweep = SweepSpec(sweep.parameter, sweep.grid, sweep.repeats, seed_base)
    check_sweep(config, sweep)

    out_dir = args.out_dir or default_out_dir()
    result = run_sweep(config, sweep, out_dir=out_dir, jobs=args.jobs, per_run=args.per_run)
    out.write(
        f"{len(sweep.grid)} grid points x {sweep.repeats} runs, "
        f"{len(result.errors)} failed\n"
    )
    for path in result.files:
        out.write(f"wrote {path}\n")
    for o in result.errors:
        sys.stderr.write(f"run {sweep.parameter.value}={o.value} seed={o.seed} failed:\n{o.error}\n")
    return EXIT_OK if result.ok else EXIT_FAIL


def _cmd_table(args, out):
    out.write(phy.format_mcs_table())
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "trace": _cmd_trace, "sweep": _cmd_sweep, "table": _cmd_table}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except (ConfigError, _UsageError) as e:
        sys.stderr.write(f"fanetsim: error: {e}\n")
        return EXIT_USAGE
    except OSError as e:
        sys.stderr.write(f"fanetsim: I/O error: {e}\n")
        return EXIT_FAIL
    except Exception as e:  # anything else is a failed run
        sys.stderr.write(f"fanetsim: run failed: {type(e).__name__}: {e}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
