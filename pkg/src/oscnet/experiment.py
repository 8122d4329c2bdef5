"""Single runs, parameter sweeps and file output."""

from __future__ import annotations

import datetime
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, behavioral, kuramoto, pll_linear
from .config import ExperimentConfig, format_config, oscillator_params
from .core import TWO_PI
from .errors import ConfigError, DivergenceError, DomainError, NumericalError, OscnetError
from .topology import build_clustered
from .trace import SimTrace, fmt, write_behavioral_csv, write_columns, write_phase_csv

MASK64 = (1 << 64) - 1

SIM_METRICS = ("final_r", "locked", "mean_frequency_rad_s", "settling_time_s", "chimera_index")
LOOP_METRICS = ("phase_margin_deg", "crossover_rad_s", "settling_time_s", "overshoot", "r_ohm", "c1_f", "c2_f")


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, index: int) -> int:
    """Seed of grid point ``index``: splitmix64(base xor splitmix64(index))."""
    return splitmix64((base & MASK64) ^ splitmix64(index))


@dataclass
class PointResult:
    index: int
    overrides: dict
    seed: int
    status: str
    metrics: dict
    message: str = ""
    trace: SimTrace | None = None


@dataclass
class SweepResult:
    mode: str
    parameters: list
    points: list = field(default_factory=list)

    @property
    def metric_names(self):
        return LOOP_METRICS if self.mode == "loop_design" else SIM_METRICS

    def rows(self):
        for p in self.points:
            row = [p.index] + [p.overrides.get(k, math.nan) for k in self.parameters]
            row += [p.seed, p.status]
            row += [p.metrics.get(m, math.nan) for m in self.metric_names]
            yield row


def build_topology(config: ExperimentConfig, seed: int):
    return build_clustered(
        config["topology.n_clusters"],
        config["topology.per_cluster"],
        config["topology.intra"],
        config["topology.inter"],
        p=config["topology.p"],
        seed=seed,
        bridge=config["topology.bridge"],
        inter_weight=config["topology.inter_weight"],
    )


def point_network(config: ExperimentConfig, index: int = 0):
    """Topology and oscillator constants of grid point ``index``, drawn from
    the same seeded stream the simulation uses."""
    rng = np.random.default_rng(derive_seed(config.seed, index))
    topo = build_topology(config, int(rng.integers(2**63)))
    return topo, oscillator_params(config, rng)


def _sim_metrics(trace: SimTrace, topology, params) -> dict:
    """Summary metrics of a phase trace. Frequency and lock metrics need ten
    samples in the final third of the run; shorter traces report NaN and
    not-locked for them."""
    mask = np.array([p.enabled for p in params])
    r, _ = analysis.order_parameter(trace.phases, mask)
    r = np.atleast_1d(r)
    settle = analysis.settling_time(trace.times, r, 0.02, float(r[-1]))
    out = {
        "final_r": float(r[-1]),
        "locked": 0,
        "mean_frequency_rad_s": math.nan,
        "settling_time_s": math.nan if settle is None else settle,
        "chimera_index": analysis.chimera_index(trace, topology, params),
    }
    try:
        lock = analysis.lock_detect(trace, params=params)
    except DomainError:
        return out
    out["locked"] = int(lock.locked)
    out["mean_frequency_rad_s"] = float(np.mean(lock.frequencies[mask]))
    return out


def _run_kuramoto(config: ExperimentConfig, seed: int):
    rng = np.random.default_rng(seed)
    topo = build_topology(config, int(rng.integers(2**63)))
    params = oscillator_params(config, rng)
    system = kuramoto.KuramotoSystem(
        params, topo, config.coupling(), config.initial_phases(rng), config["coupling.history"]
    )
    trace = kuramoto.integrate(system, config.dt, config.t_end, config["sim.sample_every"], config.events())
    final = [q.with_enabled(bool(e)) for q, e in zip(params, trace.meta["enabled"])]
    return trace, _sim_metrics(trace, topo, final), "ok"


def behavioral_config(config: ExperimentConfig, seed: int) -> behavioral.BehavioralConfig:
    rng = np.random.default_rng(seed)
    topo = build_topology(config, int(rng.integers(2**63)))
    params = oscillator_params(config, rng)
    loop = config.loop_params()
    filt = pll_linear.design_loop(loop)
    ref = None
    if config["pll.reference_mhz"] > 0:
        ref = behavioral.Reference(TWO_PI * config["pll.reference_mhz"] * 1e6, config["pll.reference_phase_rad"])
    cfg = behavioral.BehavioralConfig(
        topology=topo,
        params=params,
        filter=filt,
        i_cp=loop.i_cp,
        scheme=config["pll.scheme"],
        edges_per_advance=config["pll.edges_per_advance"],
        detector=config["pll.detector"],
        dt=config.dt,
        v_supply=config["pll.v_supply"],
        t_end=config.t_end,
        sample_every=config["sim.sample_every"],
        initial_phases=tuple(config.initial_phases(rng)),
        reference=ref,
        max_delay=max(2e-6, config.delay * 1.01),
    )
    return behavioral.set_delay(cfg, config.delay)


def _run_behavioral(config: ExperimentConfig, seed: int):
    cfg = behavioral_config(config, seed)
    trace = behavioral.run_behavioral(cfg)
    metrics = _sim_metrics(trace, cfg.topology, cfg.params)
    summary = behavioral.summarize(trace, cfg)
    metrics["locked"] = int(summary["locked"])
    return trace, metrics, trace.meta["status"]


def loop_design_outputs(config: ExperimentConfig) -> dict:
    """Design, Bode data, step response and capacitance sweep of one loop."""
    params = config.loop_params()
    filt = pll_linear.design_loop(params)
    report = pll_linear.design_report(filt, params)
    step = pll_linear.closed_loop_step(filt, params, t_end=config["loop.step_t_end_us"] * 1e-6)
    y = step.phases[:, 0]
    final = float(params.divider_n)
    settle = analysis.settling_time(step.times, y, 0.02, final)
    report["settling_time_2pct_s"] = math.nan if settle is None else settle
    report["overshoot"] = pll_linear.overshoot(step, final)
    report["final_value"] = float(y[-1])
    wc = params.target_crossover
    grid = np.logspace(math.log10(wc / 1000), math.log10(wc * 1000), 601)
    bode = pll_linear.open_loop_response(filt, params, grid)
    span = config["loop.csweep_span"]
    c2_grid = filt.c2 * np.logspace(-math.log10(span), math.log10(span), config["loop.csweep_points"])
    rows, best = pll_linear.capacitance_sweep(params, filt, c2_grid, config["loop.csweep_mode"])
    report["optimal_c2_f"] = best
    return {"filter": filt, "report": report, "step": step, "bode": bode, "csweep": rows}


def _run_loop(config: ExperimentConfig, seed: int):
    out = loop_design_outputs(config)
    rep = out["report"]
    metrics = {
        "phase_margin_deg": rep["phase_margin_deg"],
        "crossover_rad_s": rep["crossover_rad_s"],
        "settling_time_s": rep["settling_time_2pct_s"],
        "overshoot": rep["overshoot"],
        "r_ohm": rep["r_ohm"],
        "c1_f": rep["c1_f"],
        "c2_f": rep["c2_f"],
    }
    return out["step"], metrics, "ok"


RUNNERS = {"kuramoto": _run_kuramoto, "behavioral": _run_behavioral, "loop_design": _run_loop}


def run_point(config: ExperimentConfig, index: int, overrides: dict | None = None, keep_trace: bool = True) -> PointResult:
    """Run one grid point. Numerical failures are recorded, not raised;
    configuration errors propagate."""
    overrides = overrides or {}
    seed = derive_seed(config.seed, index)
    point_cfg = config.override(overrides) if overrides else config
    try:
        trace, metrics, status = RUNNERS[config.mode](point_cfg, seed)
    except DivergenceError as exc:
        return PointResult(index, overrides, seed, "diverged", {}, str(exc))
    except (NumericalError, OscnetError) as exc:
        if isinstance(exc, ConfigError):
            raise
        return PointResult(index, overrides, seed, "failed", {}, str(exc))
    return PointResult(index, overrides, seed, status, metrics, trace=trace if keep_trace else None)


def _worker(args):
    config, index, overrides, keep = args
    try:
        return run_point(config, index, overrides, keep)
    except ConfigError as exc:
        return PointResult(index, overrides, derive_seed(config.seed, index), "config_error", {}, str(exc))


def _parameters(config: ExperimentConfig) -> list:
    return [config[k] for k in ("sweep.parameter", "sweep.parameter2") if config[k]]


def run_sweep(config: ExperimentConfig, workers: int = 1, keep_traces: bool = False) -> SweepResult:
    """Run every grid point; results come back in grid order whatever the
    worker count."""
    grid = config.grid()
    jobs = [(config, i, point, keep_traces) for i, point in enumerate(grid)]
    if workers <= 1 or len(jobs) == 1:
        points = [_worker(j) for j in jobs]
    else:
        method = "fork" if "fork" in multiprocessing.get_all_start_methods() else "spawn"
        ctx = multiprocessing.get_context(method)
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs)), mp_context=ctx) as pool:
            points = list(pool.map(_worker, jobs))
    return SweepResult(config.mode, _parameters(config), points)


# --------------------------------------------------------------------------
# Output


def check_outdir(outdir, force: bool = False) -> Path:
    """Refuse a non-empty directory unless ``force``; creates nothing."""
    out = Path(outdir)
    if out.exists():
        if not out.is_dir():
            raise FileExistsError(f"{out} exists and is not a directory")
        if any(out.iterdir()) and not force:
            raise FileExistsError(f"{out} is not empty; pass --force to overwrite")
    return out


def prepare_outdir(outdir, force: bool = False) -> Path:
    out = check_outdir(outdir, force)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _gnuplot(path: Path, data: str, xlabel: str, ylabel: str, columns: list[tuple[int, int, str]],
             logx: bool = False, logy: bool = False, extra: str = "") -> None:
    lines = [
        "# gnuplot script",
        "set datafile separator ','",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set grid",
    ]
    if logx:
        lines.append("set logscale x")
    if logy:
        lines.append("set logscale y")
    if extra:
        lines.append(extra)
    parts = [f"'{data}' using {x}:{y} skip 1 with lines title '{title}'" for x, y, title in columns]
    lines.append("plot " + ", \\\n     ".join(parts))
    path.write_text("\n".join(lines) + "\n")


def _write_kv(path: Path, items: dict, comments=()) -> None:
    lines = [f"# {c}" for c in comments]
    for k, v in items.items():
        if isinstance(v, float):
            v = fmt(v)
        lines.append(f"{k}: {v}")
    path.write_text("\n".join(lines) + "\n")


DESIGN_PARTS = ("design", "bode", "step", "csweep")


def emit_design(config: ExperimentConfig, outdir, force: bool = False, parts=DESIGN_PARTS) -> list[Path]:
    """Write the loop-design file set (or the selected ``parts``)."""
    return _write_design(config, prepare_outdir(outdir, force), parts)


def _write_design(config: ExperimentConfig, out: Path, parts=DESIGN_PARTS) -> list[Path]:
    res = loop_design_outputs(config)
    written = []
    if "design" in parts:
        _write_kv(out / "design.txt", res["report"])
        written.append(out / "design.txt")
    if "bode" in parts:
        b = res["bode"]
        write_columns(out / "bode.csv", ["omega_rad_s", "gain_db", "phase_deg"], [b.frequencies, b.gain, b.phase])
        _gnuplot(out / "bode.gp", "bode.csv", "omega [rad/s]", "gain [dB] / phase [deg]",
                 [(1, 2, "gain"), (1, 3, "phase")], logx=True)
        written += [out / "bode.csv", out / "bode.gp"]
    if "step" in parts:
        s = res["step"]
        write_columns(out / "step.csv", ["t", "phi_out"], [s.times, s.phases[:, 0]])
        _gnuplot(out / "step.gp", "step.csv", "t [s]", "phi_out / phi_in", [(1, 2, "step response")])
        written += [out / "step.csv", out / "step.gp"]
    if "csweep" in parts:
        rows = res["csweep"]
        write_columns(out / "margin_vs_c2.csv", ["c2_f", "phase_margin_deg"],
                      [[r[0] for r in rows], [r[1] for r in rows]])
        _gnuplot(out / "margin_vs_c2.gp", "margin_vs_c2.csv", "C2 [F]", "phase margin [deg]",
                 [(1, 2, "phase margin")], logx=True)
        written += [out / "margin_vs_c2.csv", out / "margin_vs_c2.gp"]
    return written


def write_trace(trace: SimTrace, path, mode: str) -> None:
    if mode == "behavioral":
        write_behavioral_csv(trace, path)
    elif mode == "loop_design":
        write_columns(path, ["t", "phi_out"], [trace.times, trace.phases[:, 0]])
    else:
        write_phase_csv(trace, path)


def emit_outputs(result: SweepResult, outdir, config: ExperimentConfig, force: bool = False) -> list[Path]:
    """Write ``sweep.csv``, per-run traces under ``runs/``, ``config.txt``,
    ``summary.txt`` and plot scripts. A single loop-design run also gets the
    design file set."""
    out = prepare_outdir(outdir, force)
    written = []
    header = ["index"] + list(result.parameters) + ["seed", "status"] + list(result.metric_names)
    with (out / "sweep.csv").open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in result.rows():
            cells = []
            for x in row:
                if isinstance(x, str):
                    cells.append(x)
                elif isinstance(x, (int, np.integer)) and not isinstance(x, bool):
                    cells.append(str(int(x)))
                else:
                    cells.append(fmt(x))
            fh.write(",".join(cells) + "\n")
    written.append(out / "sweep.csv")

    runs = out / "runs"
    for p in result.points:
        if p.trace is not None:
            runs.mkdir(exist_ok=True)
            path = runs / f"run_{p.index:04d}.csv"
            write_trace(p.trace, path, result.mode)
            written.append(path)

    (out / "config.txt").write_text(format_config(config))
    written.append(out / "config.txt")
    if result.mode == "loop_design" and not result.parameters:
        written += _write_design(config, out)

    statuses = [p.status for p in result.points]
    summary = {
        "mode": result.mode,
        "points": len(result.points),
        "ok": statuses.count("ok"),
        "failed": len(statuses) - statuses.count("ok"),
        "parameters": ",".join(result.parameters) or "-",
    }
    for p in result.points:
        if p.status != "ok":
            summary[f"point_{p.index}"] = f"{p.status} {p.message}".strip()
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    _write_kv(out / "summary.txt", summary, comments=[f"generated {stamp}"])
    written.append(out / "summary.txt")

    if result.parameters and result.mode != "loop_design":
        col = result.metric_names.index("final_r") + 4 + len(result.parameters)
        _gnuplot(out / "r_vs_param.gp", "sweep.csv", result.parameters[0], "final r",
                 [(2, col, "final r")], extra="set yrange [0:1.05]")
        written.append(out / "r_vs_param.gp")
    elif result.parameters:
        col = result.metric_names.index("phase_margin_deg") + 4 + len(result.parameters)
        _gnuplot(out / "margin_vs_param.gp", "sweep.csv", result.parameters[0], "phase margin [deg]",
                 [(2, col, "phase margin")])
        written.append(out / "margin_vs_param.gp")
    return written


def metrics_table(trace: SimTrace, topology=None, params=None) -> list[tuple[str, str, float]]:
    """Rows of ``(metric, oscillator_or_cluster, value)`` for a trace."""
    rows = []
    n = trace.n_oscillators
    mask = np.ones(n, dtype=bool) if params is None else np.array([p.enabled for p in params])
    r, _ = analysis.order_parameter(trace.phases, mask)
    r = np.atleast_1d(r)
    rows.append(("final_r", "network", float(r[-1])))
    rows.append(("mean_r_final_half", "network", float(np.mean(r[r.size // 2:]))))
    try:
        lock = analysis.lock_detect(trace, params=params)
    except DomainError:
        lock = analysis.LockResult(False, math.nan, np.full(n, math.nan))
    for i in range(n):
        rows.append(("mean_frequency_rad_s", str(i), float(lock.frequencies[i])))
    rows.append(("locked", "network", float(lock.locked)))
    rows.append(("frequency_spread_rad_s", "network", lock.spread))
    if topology is not None:
        rc = analysis.cluster_order(trace.phases[trace.phases.shape[0] // 2:], topology, params)
        for c, v in enumerate(np.nanmean(rc, axis=0)):
            rows.append(("cluster_r_final_half", f"cluster{c}", float(v)))
        rows.append(("chimera_index", "network", analysis.chimera_index(trace, topology, params)))
    return rows


def write_metrics_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("metric,oscillator_or_cluster,value\n")
        for m, who, v in rows:
            fh.write(f"{m},{who},{fmt(v)}\n")
