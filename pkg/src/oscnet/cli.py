"""Command-line entry point: ``oscnet <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiment
from .config import ExperimentConfig, parse_config, validate
from .errors import ConfigError, OscnetError
from .trace import fmt, read_trace_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

COMMAND_MODES = {
    "design": "loop_design",
    "step": "loop_design",
    "csweep": "loop_design",
    "sim-kuramoto": "kuramoto",
    "sim-pll": "behavioral",
    "sweep": None,
    "analyze": None,
}


def load_config(path: str | None, mode: str | None, seed: int | None) -> ExperimentConfig:
    if path is None:
        values = {}
    else:
        values = dict(parse_config(Path(path).read_text(encoding="utf-8")).values)
    if mode is not None:
        values["mode"] = mode
    if seed is not None:
        values["seed"] = seed
    return validate(values)


def _print_kv(items: dict) -> None:
    for k, v in items.items():
        print(f"{k}: {fmt(v) if isinstance(v, float) else v}")


def cmd_loop(args, config: ExperimentConfig) -> int:
    parts = {"design": ("design", "bode"), "step": ("step",), "csweep": ("csweep",)}[args.command]
    res = experiment.loop_design_outputs(config)
    rep = res["report"]
    if args.command == "design":
        _print_kv(rep)
    elif args.command == "step":
        _print_kv({k: rep[k] for k in ("settling_time_2pct_s", "overshoot", "final_value")})
    else:
        _print_kv({"designed_c2_f": rep["c2_f"], "optimal_c2_f": rep["optimal_c2_f"],
                   "mode": config["loop.csweep_mode"]})
    if args.out:
        experiment.emit_design(config, args.out, args.force, parts)
    return EXIT_OK


def cmd_run(args, config: ExperimentConfig) -> int:
    result = experiment.run_sweep(config, args.workers, keep_traces=args.out is not None)
    failed = [p for p in result.points if p.status not in ("ok", "rail_pinned")]
    for p in result.points:
        cells = [f"point {p.index}", p.status] + [f"{k}={fmt(v)}" for k, v in p.overrides.items()]
        cells += [f"{k}={fmt(v)}" for k, v in p.metrics.items()]
        if p.message:
            cells.append(p.message)
        print(" ".join(cells))
    if args.out:
        experiment.emit_outputs(result, args.out, config, args.force)
        if args.command != "sweep" and result.points[0].trace is not None:
            topo = params = None
            if config.mode != "loop_design":
                topo, params = experiment.point_network(config, 0)
            rows = experiment.metrics_table(result.points[0].trace, topo, params)
            experiment.write_metrics_csv(rows, Path(args.out) / "metrics.csv")
    if args.command != "sweep" and failed:
        print(f"error: {failed[0].message}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_analyze(args, config: ExperimentConfig | None) -> int:
    trace = read_trace_csv(args.trace)
    topo = params = None
    if config is not None and config.size == trace.n_oscillators:
        topo, params = experiment.point_network(config, 0)
    rows = experiment.metrics_table(trace, topo, params)
    if args.out:
        out = experiment.prepare_outdir(args.out, args.force)
        experiment.write_metrics_csv(rows, out / "metrics.csv")
    else:
        print("metric,oscillator_or_cluster,value")
        for m, who, v in rows:
            print(f"{m},{who},{fmt(v)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oscnet", description="Coupled-oscillator and PLL network simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "design": "design the loop filter and print its parameters",
        "step": "closed-loop phase-step response",
        "csweep": "phase margin versus loop-filter capacitance",
        "sim-kuramoto": "single delayed Kuramoto run",
        "sim-pll": "single behavioral PLL network run",
        "sweep": "parameter sweep in the configured mode",
        "analyze": "metrics of an existing trace CSV",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        if name == "analyze":
            p.add_argument("trace", help="trace CSV written by sim-kuramoto, sim-pll or sweep")
        p.add_argument("--config", help="experiment config file (key = value lines)")
        p.add_argument("--out", help="output directory; without it results go to stdout only")
        p.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--seed", type=int, help="base seed (overrides the config)")
        p.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.workers < 1:
            raise ConfigError("--workers must be ≥ 1")
        if args.out:
            experiment.check_outdir(args.out, args.force)
        if args.command == "analyze":
            config = load_config(args.config, None, args.seed) if args.config else None
            return cmd_analyze(args, config)
        config = load_config(args.config, COMMAND_MODES[args.command], args.seed)
        if args.command in ("design", "step", "csweep"):
            return cmd_loop(args, config)
        return cmd_run(args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OscnetError, ArithmeticError, ValueError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
