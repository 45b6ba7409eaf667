"""Command line front end: run, sweep, validate, plot.

Exit codes: 0 clean, 1 failed validation, 2 bad usage or configuration,
3 numeric abort during a run.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Mapping, Sequence

from .checks import run_validation
from .kernel import BatchflowError, NumericError, write_trace_csv
from .report import (RunSummary, read_trace_csv, summarize, write_summary_csv)
from .scenario import (ConfigError, ScenarioConfig, ScenarioNames, build,
                       discover_names, load_config)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _parse_overrides(pairs: Sequence[str]) -> dict[str, float]:
    overrides: dict[str, float] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects OBJ.SEC=value, got {pair!r}")
        ref, _, raw = pair.partition("=")
        ref = ref.strip()
        try:
            overrides[ref] = float(raw.strip())
        except ValueError:
            raise ConfigError(f"--set {ref}: not a number: {raw.strip()!r}")
    return overrides


def _stem(config_path: str) -> str:
    return os.path.splitext(os.path.basename(config_path))[0]


def _shape_limits(config: ScenarioConfig, names: ScenarioNames):
    by_name = config.object_map()
    target = low = high = None
    if names.comparator is not None:
        target = by_name[names.comparator].overrides.get("IN1", 50.0)
    if names.buffer is not None:
        spec = by_name[names.buffer]
        low = spec.overrides.get("LL", 1.2)
        high = spec.overrides.get("HL", 2.0)
    return target, low, high


def _cmd_run(args) -> int:
    config = load_config(args.config)
    overrides = _parse_overrides(args.set or [])
    ticks = args.ticks if args.ticks is not None else config.run.max_ticks
    if ticks < 1:
        raise ConfigError(f"--ticks must be >= 1, got {ticks}")

    engine = build(config, overrides=overrides)
    engine.run(ticks)

    trace_path = args.trace or config.run.trace or f"{_stem(args.config)}_trace.csv"
    write_trace_csv(trace_path, engine.trace)

    names = discover_names(config)
    summary = summarize(engine.trace, names,
                        stop_reason=engine.stop_reason or "")
    summary_path = args.summary or f"{_stem(args.config)}_summary.csv"
    write_summary_csv(summary_path, [("", summary)])

    print(f"ran {engine.tick} ticks, stop: {engine.stop_reason}")
    print(f"cycles: {summary.cycles}  delivered: {summary.delivered:.6g}")
    print(f"trace: {trace_path}")
    print(f"summary: {summary_path}")

    if args.plots:
        from .plots import render_run_figures
        target, low, high = _shape_limits(config, names)
        for path in render_run_figures(engine.trace, names, args.plots,
                                       target=target, low=low, high=high):
            print(f"figure: {path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    base_overrides = _parse_overrides(args.set or [])
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be a comma list of numbers, "
                          f"got {args.values!r}")
    if len(values) < 2:
        raise ConfigError("--values needs at least 2 values")

    param = args.param
    if param.count(".") != 1:
        raise ConfigError(f"--param expects OBJ.SEC, got {param!r}")
    obj_name, _, sec_name = param.partition(".")
    spec = config.object_map().get(obj_name)
    if spec is None:
        raise ConfigError(f"--param references unknown object {obj_name!r}")
    from .kernel import SectionKind
    from .scenario import KIND_CLASSES
    sec = next((d for d in KIND_CLASSES[spec.kind].SECTIONS
                if d.name == sec_name), None)
    if sec is None:
        raise ConfigError(f"--param references unknown section {param!r}")
    if sec.kind is not SectionKind.SETTING:
        raise ConfigError(f"--param {param} is {sec.kind.value}; only "
                          f"settings can be swept")

    ticks = args.ticks if args.ticks is not None else config.run.max_ticks
    if ticks < 1:
        raise ConfigError(f"--ticks must be >= 1, got {ticks}")

    names = discover_names(config)
    rows: list[tuple[str, RunSummary]] = []
    for value in values:
        overrides = dict(base_overrides)
        overrides[param] = value
        engine = build(config, overrides=overrides)
        engine.run(ticks)
        rows.append((f"{value:g}",
                     summarize(engine.trace, names,
                               stop_reason=engine.stop_reason or "")))

    summary_path = args.summary or f"{_stem(args.config)}_sweep.csv"
    write_summary_csv(summary_path, rows)
    print(f"swept {param} over {len(values)} values, {ticks} ticks each")
    print(f"summary: {summary_path}")

    if args.plots:
        from .plots import render_sweep_figure
        os.makedirs(args.plots, exist_ok=True)
        path = render_sweep_figure(
            rows, os.path.join(args.plots, "sweep_summary.png"), param)
        print(f"figure: {path}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    results = run_validation(config, ticks=args.ticks)
    width = max(len(r.name) for r in results)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{mark}  {r.name:<{width}}  {r.detail}")
    failed = sum(1 for r in results if not r.passed)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_INVARIANT


def _cmd_plot(args) -> int:
    records = read_trace_csv(args.trace)
    names = ScenarioNames(heater=args.heater, buffer=args.buffer,
                          sink=args.sink)
    from .plots import render_run_figures
    written = render_run_figures(records, names, args.out,
                                 target=args.target, low=args.low,
                                 high=args.high)
    if not written:
        raise ConfigError("nothing to draw: no heater or buffer rows found")
    for path in written:
        print(f"figure: {path}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="batchflow",
        description="Tick-driven simulation of a batch heating line.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one config")
    p_run.add_argument("config")
    p_run.add_argument("--ticks", type=int, default=None,
                       help="override the config's max_ticks")
    p_run.add_argument("--trace", default=None, help="trace CSV path")
    p_run.add_argument("--summary", default=None, help="summary CSV path")
    p_run.add_argument("--plots", default=None, metavar="DIR",
                       help="also render timing figures into DIR")
    p_run.add_argument("--set", action="append", metavar="OBJ.SEC=VAL",
                       help="preset override, repeatable")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="rerun a config over a setting")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True, metavar="OBJ.SEC")
    p_sweep.add_argument("--values", required=True,
                         help="comma separated, at least 2")
    p_sweep.add_argument("--ticks", type=int, default=None)
    p_sweep.add_argument("--summary", default=None)
    p_sweep.add_argument("--plots", default=None, metavar="DIR")
    p_sweep.add_argument("--set", action="append", metavar="OBJ.SEC=VAL")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_val = sub.add_parser("validate", help="run the invariant suite")
    p_val.add_argument("config")
    p_val.add_argument("--ticks", type=int, default=None)
    p_val.set_defaults(func=_cmd_validate)

    p_plot = sub.add_parser("plot", help="draw figures from a trace CSV")
    p_plot.add_argument("trace")
    p_plot.add_argument("--out", default="figures", metavar="DIR")
    p_plot.add_argument("--heater", default="mTmprA1")
    p_plot.add_argument("--buffer", default="sSepA1")
    p_plot.add_argument("--sink", default="mSnkA1")
    p_plot.add_argument("--target", type=float, default=50.0)
    p_plot.add_argument("--low", type=float, default=1.2)
    p_plot.add_argument("--high", type=float, default=2.0)
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, BatchflowError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
