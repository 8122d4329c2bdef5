"""Line-oriented experiment configuration.

Format: one ``section.key = value`` per line, ``#`` starts a comment, lists
are comma-separated. Human units (Hz, kHz, MHz, us, uA) appear in key
names and are converted to rad/s and seconds when the config is turned
into simulation objects. Unknown keys are rejected.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .core import TWO_PI, CouplingConfig, Normalization, OscillatorParams
from .errors import ConfigError

MODES = ("kuramoto", "behavioral", "loop_design")


def _float(text):
    return float(text)


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _floats(text):
    text = text.strip()
    return [] if not text else [float(x) for x in text.split(",")]


def _ints(text):
    text = text.strip()
    return [] if not text else [_int(x) for x in text.split(",")]


def _str(text):
    return text.strip()


def _phases(text):
    text = text.strip()
    if text in ("zero", "random"):
        return text
    return _floats(text)


def _events(text):
    """``t_us:id:on|off`` items."""
    out = []
    for item in filter(None, (x.strip() for x in text.split(","))):
        parts = item.split(":")
        if len(parts) != 3 or parts[2] not in ("on", "off"):
            raise ValueError(f"event {item!r} must look like t_us:id:on|off")
        out.append((float(parts[0]), _int(parts[1]), parts[2]))
    return out


def _choice(*options):
    def check(v):
        if v not in options:
            return f"must be one of {', '.join(options)}"
    return check


def _nonneg(msg):
    def check(v):
        if v < 0:
            return msg
    return check


def _positive(v):
    if not v > 0:
        return "must be > 0"


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], str | None] | None = None


SCHEMA: dict[str, Key] = {
    "mode": Key(_str, "kuramoto", _choice(*MODES)),
    "seed": Key(_int, 0, _nonneg("seed must be ≥ 0")),
    "topology.n_clusters": Key(_int, 1, lambda v: None if v >= 1 else "must be ≥ 1"),
    "topology.per_cluster": Key(_int, 2, lambda v: None if v >= 1 else "must be ≥ 1"),
    "topology.intra": Key(_str, "all_to_all", _choice("all_to_all", "sparse")),
    "topology.p": Key(_float, 1.0, lambda v: None if 0 <= v <= 1 else "must lie in [0, 1]"),
    "topology.inter": Key(_str, "none", _choice("none", "ring", "chain")),
    "topology.bridge": Key(_int, 0, _nonneg("bridge index must be ≥ 0")),
    "topology.inter_weight": Key(_float, 1.0, _nonneg("inter_weight must be ≥ 0")),
    "topology.disabled": Key(_ints, []),
    "oscillators.freq_hz": Key(_floats, [10e6]),
    "oscillators.freq_spread_hz": Key(_float, 0.0, _nonneg("freq_spread_hz must be ≥ 0")),
    "oscillators.initial_phase": Key(_phases, "random"),
    "coupling.strength_rad_s": Key(_float, 0.0, _nonneg("strength must be ≥ 0")),
    "coupling.delay_us": Key(_float, 0.0, _nonneg("delay must be ≥ 0")),
    "coupling.phase_lag_rad": Key(
        _float, 0.0, lambda v: None if 0 <= v <= math.pi / 2 else "phase lag must lie in [0, pi/2]"
    ),
    "coupling.normalization": Key(_str, "global_n", _choice("global_n", "in_degree")),
    "coupling.history": Key(_str, "constant", _choice("constant", "back_extrapolate")),
    "sim.dt_us": Key(_float, 1e-3, _positive),
    "sim.t_end_us": Key(_float, 2.0, _positive),
    "sim.sample_every": Key(_int, 10, lambda v: None if v >= 1 else "must be ≥ 1"),
    "events.toggle": Key(_events, []),
    "loop.phase_margin_deg": Key(_float, 74.0, lambda v: None if 0 < v < 90 else "must lie in (0, 90)"),
    "loop.bandwidth_khz": Key(_float, 27.0, _positive),
    "loop.kvco_mhz_per_v": Key(_float, 3.0, _positive),
    "loop.icp_ua": Key(_float, 1.34, _positive),
    "loop.divider": Key(_int, 1, lambda v: None if v >= 1 else "must be ≥ 1"),
    "loop.step_t_end_us": Key(_float, 600.0, _positive),
    "loop.csweep_span": Key(_float, 30.0, lambda v: None if v > 1 else "must be > 1"),
    "loop.csweep_points": Key(_int, 121, lambda v: None if v >= 3 else "must be ≥ 3"),
    "loop.csweep_mode": Key(_str, "scaled", _choice("scaled", "c2_only")),
    "pll.scheme": Key(_str, "cs1", _choice("cs1", "cs2", "uncoupled")),
    "pll.edges_per_advance": Key(_int, 1, lambda v: None if v >= 1 else "must be ≥ 1"),
    "pll.detector": Key(_str, "pfd", _choice("pfd", "xor")),
    "pll.v_supply": Key(_float, 1.0, _positive),
    "pll.reference_mhz": Key(_float, 0.0, _nonneg("reference_mhz must be ≥ 0 (0 disables)")),
    "pll.reference_phase_rad": Key(_float, 0.0),
    "sweep.parameter": Key(_str, ""),
    "sweep.values": Key(_floats, []),
    "sweep.parameter2": Key(_str, ""),
    "sweep.values2": Key(_floats, []),
}

SWEEPABLE = {k for k, v in SCHEMA.items() if v.parse in (_float, _int) and not k.startswith("sweep.")}


def _format_value(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        if v and isinstance(v[0], tuple):
            return ", ".join(f"{t!r}:{i}:{s}" for t, i, s in v)
        return ", ".join(_format_value(x) for x in v)
    raise TypeError(type(v))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings in the file's units; accessors convert to
    internal units (rad/s, seconds)."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    # -- derived objects ---------------------------------------------------

    @property
    def mode(self) -> str:
        return self.values["mode"]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def size(self) -> int:
        return self["topology.n_clusters"] * self["topology.per_cluster"]

    @property
    def dt(self) -> float:
        return self["sim.dt_us"] * 1e-6

    @property
    def t_end(self) -> float:
        return self["sim.t_end_us"] * 1e-6

    @property
    def delay(self) -> float:
        return self["coupling.delay_us"] * 1e-6

    def frequencies_hz(self, rng: np.random.Generator | None = None) -> np.ndarray:
        base = np.broadcast_to(np.asarray(self["oscillators.freq_hz"], dtype=float), (self.size,)).copy()
        spread = self["oscillators.freq_spread_hz"]
        if spread > 0:
            rng = rng or np.random.default_rng(self.seed)
            base = base + rng.uniform(-spread / 2, spread / 2, size=self.size)
        return base

    def initial_phases(self, rng: np.random.Generator) -> np.ndarray:
        spec = self["oscillators.initial_phase"]
        if spec == "zero":
            return np.zeros(self.size)
        if spec == "random":
            return rng.uniform(0, TWO_PI, size=self.size)
        return np.asarray(spec, dtype=float)

    def coupling(self) -> CouplingConfig:
        return CouplingConfig(
            strength=self["coupling.strength_rad_s"],
            delay=self.delay,
            phase_lag=self["coupling.phase_lag_rad"],
            normalization=Normalization(self["coupling.normalization"]),
        )

    def loop_params(self):
        from .pll_linear import LoopParams

        return LoopParams(
            k_vco=self["loop.kvco_mhz_per_v"] * 1e6,
            i_cp=self["loop.icp_ua"] * 1e-6,
            divider_n=self["loop.divider"],
            target_phase_margin=self["loop.phase_margin_deg"],
            target_crossover=TWO_PI * self["loop.bandwidth_khz"] * 1e3,
        )

    def events(self) -> list[tuple[float, int, bool]]:
        return [(t * 1e-6, i, s == "on") for t, i, s in self["events.toggle"]]

    def override(self, updates: dict) -> "ExperimentConfig":
        vals = dict(self.values)
        vals.update(updates)
        return validate(vals)

    # -- sweeps ------------------------------------------------------------

    def grid(self) -> list[dict]:
        """Grid points as ``{key: value}`` overrides (cartesian product of the
        one or two sweep axes); a single empty point without a sweep."""
        axes = []
        for pk, vk in (("sweep.parameter", "sweep.values"), ("sweep.parameter2", "sweep.values2")):
            if self[pk]:
                axes.append([(self[pk], v) for v in self[vk]])
        if not axes:
            return [{}]
        return [dict(combo) for combo in itertools.product(*axes)]


def validate(values: dict) -> ExperimentConfig:
    vals = {k: spec.default for k, spec in SCHEMA.items()}
    for k, v in values.items():
        if k not in SCHEMA:
            raise ConfigError("unknown key", key=k)
        vals[k] = v
    for k, spec in SCHEMA.items():
        if spec.parse is _int and isinstance(vals[k], float):
            if vals[k] != int(vals[k]):
                raise ConfigError("must be an integer", key=k)
            vals[k] = int(vals[k])
        if spec.parse is _float and isinstance(vals[k], int):
            vals[k] = float(vals[k])
        if spec.check is not None:
            msg = spec.check(vals[k])
            if msg:
                raise ConfigError(msg, key=k)
    n = vals["topology.n_clusters"] * vals["topology.per_cluster"]
    freqs = vals["oscillators.freq_hz"]
    if len(freqs) not in (1, n):
        raise ConfigError(f"needs 1 or {n} values", key="oscillators.freq_hz")
    if any(f <= 0 for f in freqs):
        raise ConfigError("frequencies must be > 0", key="oscillators.freq_hz")
    phases = vals["oscillators.initial_phase"]
    if isinstance(phases, list) and len(phases) != n:
        raise ConfigError(f"needs {n} phases", key="oscillators.initial_phase")
    for i in vals["topology.disabled"]:
        if not 0 <= i < n:
            raise ConfigError(f"invalid oscillator id {i}", key="topology.disabled")
    for _, i, _ in vals["events.toggle"]:
        if not 0 <= i < n:
            raise ConfigError(f"invalid oscillator id {i}", key="events.toggle")
    if vals["topology.bridge"] >= vals["topology.per_cluster"]:
        raise ConfigError("must be a member index within a cluster", key="topology.bridge")
    if vals["topology.inter"] != "none" and vals["topology.n_clusters"] < 2:
        raise ConfigError("inter-cluster coupling needs at least 2 clusters", key="topology.inter")
    for pk, vk in (("sweep.parameter", "sweep.values"), ("sweep.parameter2", "sweep.values2")):
        if vals[pk]:
            if vals[pk] not in SWEEPABLE:
                raise ConfigError(f"{vals[pk]!r} is not a sweepable numeric field", key=pk)
            if not vals[vk]:
                raise ConfigError("sweep grid must not be empty", key=vk)
        elif vals[vk]:
            raise ConfigError(f"values given without {pk}", key=vk)
    if vals["sweep.parameter2"] and not vals["sweep.parameter"]:
        raise ConfigError("parameter2 requires parameter", key="sweep.parameter2")
    return ExperimentConfig(vals)


def parse_config(text: str) -> ExperimentConfig:
    raw: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, value = body.partition("=")
        key = key.strip()
        if not key or any(c.isspace() for c in key):
            raise ConfigError(f"malformed key {key!r}", line=lineno)
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        try:
            raw[key] = SCHEMA[key].parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line=lineno) from None
    return validate(raw)


def format_config(config: ExperimentConfig) -> str:
    """Canonical text: every key in schema order."""
    lines = [f"{k} = {_format_value(config.values[k])}".rstrip() for k in SCHEMA]
    return "\n".join(lines) + "\n"


def default_config(overrides: dict | None = None) -> ExperimentConfig:
    return validate(dict(overrides or {}))


def oscillator_params(config: ExperimentConfig, rng: np.random.Generator) -> list[OscillatorParams]:
    """Per-oscillator constants for the configured mode.

    In behavioral mode ``oscillators.freq_hz`` is the frequency at mid-rail,
    so the natural (zero-volt) frequency sits K_vco * v_supply / 2 lower.
    """
    freqs = config.frequencies_hz(rng)
    kvco = config["loop.kvco_mhz_per_v"] * 1e6
    disabled = set(config["topology.disabled"])
    out = []
    for i, f in enumerate(freqs):
        if config.mode == "behavioral":
            f0 = f - kvco * config["pll.v_supply"] / 2
            if f0 <= 0:
                raise ConfigError("mid-rail frequency too low for the VCO gain", key="oscillators.freq_hz")
        else:
            f0 = f
        out.append(OscillatorParams(TWO_PI * f0, 0.0, kvco, i not in disabled))
    return out
