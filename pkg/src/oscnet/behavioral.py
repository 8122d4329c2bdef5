"""Fixed-step behavioral simulation of a network of charge-pump PLLs.

Each PLL is a square-wave VCO (omega = omega_0 + 2 pi K_vco v_ctrl), a bank of
lead/lag pulse comparators against its peers, gate logic for the coupling
scheme, a charge pump and the R-C1 || C2 loop filter.

Rising edges are located inside a step by linear interpolation of the VCO
phase, and comparator pulses are integrated over the exact sub-step
intervals during which they are asserted, so the pump charge is not
quantised to whole steps.

Coupling schemes:

* ``cs1``: every peer has its own comparator. UP is the AND of the lead
  pulses of all currently-leading peers, DOWN is the OR of all lag pulses.
* ``cs2``: a 3-bit counter, advanced by the PLL's own rising edges, selects
  one peer at a time through a multiplexer.
* ``uncoupled``: free-running VCOs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import analysis
from .core import TWO_PI, OscillatorParams
from .errors import ConfigError, DomainError
from .pll_linear import LoopFilter
from .topology import Topology, in_neighbors
from .trace import SimTrace

SCHEMES = ("cs1", "cs2", "uncoupled")
DETECTORS = ("pfd", "xor")
COUNTER_BITS = 3
COUNTER_MOD = 1 << COUNTER_BITS

LEAD, ALIGNED, LAG = 1, 0, -1


@dataclass(frozen=True)
class Reference:
    """External reference clock fed to every enabled PLL as an extra peer."""

    frequency: float  # rad/s
    phase: float = 0.0


@dataclass(frozen=True)
class BehavioralConfig:
    topology: Topology
    params: tuple
    filter: LoopFilter
    i_cp: float = 1.34e-6
    scheme: str = "cs1"
    edges_per_advance: int = 1
    detector: str = "pfd"
    delay_tau: float = 0.0
    dt: float = 1e-9
    v_supply: float = 1.0
    t_end: float = 1e-6
    sample_every: int = 100
    initial_phases: tuple | None = None
    initial_vctrl: tuple | None = None
    reference: Reference | None = None
    max_delay: float = 2e-6

    def __post_init__(self):
        n = self.topology.size
        object.__setattr__(self, "params", tuple(self.params))
        if len(self.params) != n:
            raise ConfigError(f"{len(self.params)} PLL params for a {n}-node topology")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}", key="scheme")
        if self.detector not in DETECTORS:
            raise ConfigError(f"detector must be one of {DETECTORS}", key="detector")
        if self.edges_per_advance < 1:
            raise ConfigError("edges_per_advance must be >= 1", key="edges_per_advance")
        if not (self.dt > 0 and self.t_end >= self.dt):
            raise ConfigError("need dt > 0 and t_end >= dt")
        if not (self.i_cp > 0 and self.v_supply > 0):
            raise ConfigError("i_cp and v_supply must be positive")
        if self.sample_every < 1:
            raise ConfigError("sample_every must be >= 1")
        if self.delay_tau < 0:
            raise ConfigError("delay must be >= 0", key="delay_tau")
        if self.delay_samples > self.max_delay_samples:
            raise ConfigError(
                f"delay {self.delay_tau:g} s exceeds the delay-line capacity {self.max_delay:g} s",
                key="delay_tau",
            )
        fastest = max(p.omega + TWO_PI * p.vco_gain * self.v_supply for p in self.params)
        if self.reference is not None:
            fastest = max(fastest, self.reference.frequency)
        if self.dt > TWO_PI / fastest / 64 * (1 + 1e-9):
            raise ConfigError(
                f"dt={self.dt:g} s is coarser than 1/64 of the fastest VCO period", key="dt"
            )
        if self.initial_phases is not None:
            object.__setattr__(self, "initial_phases", tuple(float(x) for x in self.initial_phases))
            if len(self.initial_phases) != n:
                raise ConfigError("initial_phases length mismatch")
        if self.initial_vctrl is not None:
            iv = np.broadcast_to(np.asarray(self.initial_vctrl, dtype=float), (n,))
            if np.any(iv < 0) or np.any(iv > self.v_supply):
                raise ConfigError("initial_vctrl must lie within [0, v_supply]")
            object.__setattr__(self, "initial_vctrl", tuple(float(x) for x in iv))

    @property
    def size(self) -> int:
        return self.topology.size

    @property
    def delay_samples(self) -> int:
        return int(round(self.delay_tau / self.dt))

    @property
    def max_delay_samples(self) -> int:
        return int(math.floor(self.max_delay / self.dt + 1e-9))

    @property
    def effective_delay(self) -> float:
        return self.delay_samples * self.dt


def set_delay(config: BehavioralConfig, tau: float) -> BehavioralConfig:
    """Quantise ``tau`` to whole steps; ``effective_delay`` reports the result."""
    if not tau >= 0:
        raise ConfigError("delay must be >= 0", key="delay_tau")
    return replace(config, delay_tau=round(tau / config.dt) * config.dt)


def default_pll_params(
    n: int,
    center_hz: float = 10e6,
    k_vco: float = 3e6,
    v_supply: float = 1.0,
    offsets_hz: Sequence[float] | None = None,
) -> list[OscillatorParams]:
    """PLLs whose tuning range spans +/- K_vco * v_supply / 2 around ``center_hz``."""
    base = TWO_PI * (center_hz - k_vco * v_supply / 2)
    offs = offsets_hz if offsets_hz is not None else [0.0] * n
    return [OscillatorParams(base, TWO_PI * o, k_vco) for o in offs]


# --------------------------------------------------------------------------
# VCO


@dataclass
class PllState:
    """Mutable per-PLL state. The VCO phase is split into whole cycles and a
    fraction in [0, 2 pi) so long runs keep full resolution."""

    frac: float = 0.0
    cycles: int = 0
    v_c1: float = 0.0
    v_ctrl: float = 0.0
    cs2_counter: int = 0
    edges_since_advance: int = 0

    @classmethod
    def at(cls, phase: float, v_ctrl: float = 0.0) -> "PllState":
        cycles = math.floor(phase / TWO_PI)
        return cls(phase - cycles * TWO_PI, cycles, v_ctrl, v_ctrl)

    @property
    def vco_phase(self) -> float:
        return self.cycles * TWO_PI + self.frac

    @property
    def output(self) -> int:
        return 1 if self.frac < math.pi else 0


def vco_frequency(params: OscillatorParams, v_ctrl: float) -> float:
    return params.omega + TWO_PI * params.vco_gain * v_ctrl


def vco_step(state: PllState, params: OscillatorParams, dt: float):
    """Advance the VCO by one step at the current control voltage.

    Returns ``(edge_offset, output)`` where ``edge_offset`` is the time into
    the step of a rising edge (or None).
    """
    omega = params.omega + TWO_PI * params.vco_gain * state.v_ctrl
    adv = omega * dt
    new = state.frac + adv
    edge = None
    if new >= TWO_PI:
        if new >= 2 * TWO_PI:
            raise DomainError("more than one VCO cycle per step; reduce dt")
        edge = (TWO_PI - state.frac) / omega
        new -= TWO_PI
        state.cycles += 1
    state.frac = new
    return edge, state.output


# --------------------------------------------------------------------------
# Phase comparison


@dataclass(frozen=True)
class Comparison:
    sign: int
    overlap: float


def rising_edges(samples) -> np.ndarray:
    x = np.asarray(samples).astype(np.int8)
    return np.nonzero((x[1:] == 1) & (x[:-1] == 0))[0] + 1


def compare_phases(peer, own, dt: float) -> Comparison:
    """Compare two sampled binary waveforms by their latest rising edges.

    The edge-time difference is wrapped into (-T/2, T/2], T being the own
    period estimated from its last two edges. A positive difference (peer
    edge earlier) is a lead; ``overlap`` is the pulse width in seconds.
    """
    pe, oe = rising_edges(peer), rising_edges(own)
    if pe.size == 0 or oe.size == 0:
        return Comparison(ALIGNED, 0.0)
    if oe.size >= 2:
        period = (oe[-1] - oe[-2]) * dt
    elif pe.size >= 2:
        period = (pe[-1] - pe[-2]) * dt
    else:
        period = math.inf
    diff = (oe[-1] - pe[-1]) * dt
    if math.isfinite(period):
        diff = diff - period * math.floor(diff / period + 0.5)
        if diff <= -period / 2:
            diff += period
    if abs(diff) < 0.5 * dt:
        return Comparison(ALIGNED, 0.0)
    return Comparison(LEAD if diff > 0 else LAG, abs(diff))


@dataclass
class PulseState:
    """One lead/lag comparator (PFD-style) between PLL_k and one peer.

    A peer edge with no pending lag starts a lead pulse, which the next own
    edge ends; an own edge with no pending lead starts a lag pulse, which
    the next peer edge ends.

    The comparator arms on the first edge after both sides have produced
    one. The arming edge is paired with the other side's latest edge using
    the wrapped (-T/2, T/2) window: if that edge lies more than T/2 back,
    the pair is read the other way round and the corresponding pulse starts
    at the arming edge.
    """

    period: float = math.inf
    sign: int = ALIGNED
    lead: bool = False
    lag: bool = False
    last_own: float | None = None
    last_peer: float | None = None
    started: float = 0.0

    @property
    def armed(self) -> bool:
        return self.last_own is not None and self.last_peer is not None

    def peer_edge(self, t: float) -> None:
        if not self.armed:
            if self.last_own is not None and t - self.last_own >= 0.5 * self.period:
                self.lead, self.sign, self.started = True, LEAD, t
            self.last_peer = t
            return
        self.last_peer = t
        if self.lag:
            self.lag = False
            if t - self.started <= 0.0:
                self.sign = ALIGNED
        else:
            self.lead = True
            self.sign = LEAD
            self.started = t

    def own_edge(self, t: float) -> None:
        if not self.armed:
            if self.last_peer is not None and t - self.last_peer >= 0.5 * self.period:
                self.lag, self.sign, self.started = True, LAG, t
            self.last_own = t
            return
        self.last_own = t
        if self.lead:
            self.lead = False
            if t - self.started <= 0.0:
                self.sign = ALIGNED
        else:
            self.lag = True
            self.sign = LAG
            self.started = t


def cs1_gate(pulses: Sequence[PulseState]) -> tuple[bool, bool]:
    """UP = AND of lead pulses over currently-leading peers (false if none);
    DOWN = OR of lag pulses."""
    any_lead = False
    up = True
    dn = False
    for p in pulses:
        if p.sign == LEAD:
            any_lead = True
            if not p.lead:
                up = False
        if p.lag:
            dn = True
    return any_lead and up, dn


def cs1_pump_current(pulses: Sequence[PulseState], i_cp: float) -> float:
    up, dn = cs1_gate(pulses)
    return i_cp * (int(up) - int(dn))


def cs2_select(state: PllState, n_peers: int) -> int | None:
    """Slot index of the peer currently routed through the multiplexer."""
    if n_peers == 0:
        return None
    return state.cs2_counter % n_peers


def cs2_advance(state: PllState, edges_per_advance: int = 1) -> None:
    """Count one own rising edge; step the 3-bit counter when due."""
    state.edges_since_advance += 1
    if state.edges_since_advance >= edges_per_advance:
        state.edges_since_advance = 0
        state.cs2_counter = (state.cs2_counter + 1) % COUNTER_MOD


class PumpLogic:
    """Comparators plus scheme gating for one PLL.

    ``step`` takes the own edge offset and each peer's (delayed) edge offset
    within a step of length ``dt`` and returns the time UP and DOWN were
    asserted during that step.
    """

    def __init__(self, n_peers: int, scheme: str = "cs1", edges_per_advance: int = 1,
                 state: PllState | None = None, period: float = math.inf):
        self.pulses = [PulseState(period) for _ in range(n_peers)]
        self.scheme = scheme
        self.edges_per_advance = edges_per_advance
        self.state = state if state is not None else PllState()
        self._gate = (False, False)

    def gate(self) -> tuple[bool, bool]:
        if not self.pulses or self.scheme == "uncoupled":
            return False, False
        if self.scheme == "cs2":
            p = self.pulses[cs2_select(self.state, len(self.pulses))]
            return p.sign == LEAD and p.lead, p.lag
        return cs1_gate(self.pulses)

    def step(self, own_edge, peer_edges, dt: float, t0: float = 0.0) -> tuple[float, float]:
        events = []
        if own_edge is not None:
            events.append((own_edge, 1, -1))
        for j, e in enumerate(peer_edges):
            if e is not None:
                events.append((e, 0, j))
        up, dn = self._gate
        if not events:
            return (dt if up else 0.0), (dt if dn else 0.0)
        events.sort()
        up_t = dn_t = 0.0
        prev = 0.0
        for t, kind, j in events:
            seg = t - prev
            if up:
                up_t += seg
            if dn:
                dn_t += seg
            prev = t
            if kind == 1:
                for p in self.pulses:
                    p.own_edge(t0 + t)
                if self.scheme == "cs2":
                    cs2_advance(self.state, self.edges_per_advance)
            else:
                self.pulses[j].peer_edge(t0 + t)
            up, dn = self._gate = self.gate()
        seg = dt - prev
        if up:
            up_t += seg
        if dn:
            dn_t += seg
        return up_t, dn_t


# --------------------------------------------------------------------------
# Loop filter


class FilterStepper:
    """Trapezoidal update of the R-C1 || C2 network driven by a current source.

    States are (v_c1, v_ctrl). The rule conserves C1 v_c1 + C2 v_ctrl
    exactly: it changes by i * dt each step.
    """

    def __init__(self, filt: LoopFilter, dt: float, v_supply: float = math.inf):
        a = np.array([
            [-1.0 / (filt.r * filt.c1), 1.0 / (filt.r * filt.c1)],
            [1.0 / (filt.r * filt.c2), -1.0 / (filt.r * filt.c2)],
        ])
        b = np.array([0.0, 1.0 / filt.c2])
        lhs = np.eye(2) - 0.5 * dt * a
        m = np.linalg.solve(lhs, np.eye(2) + 0.5 * dt * a)
        nvec = np.linalg.solve(lhs, dt * b)
        self.m = m
        self.n = nvec
        (self.m00, self.m01), (self.m10, self.m11) = m.tolist()
        self.n0, self.n1 = nvec.tolist()
        self.v_supply = v_supply

    def step(self, state: PllState, i_pump: float) -> bool:
        """Update in place; returns True when the rail clamp engaged."""
        v1, v = state.v_c1, state.v_ctrl
        nv = self.m10 * v1 + self.m11 * v + self.n1 * i_pump
        if nv > self.v_supply or nv < 0.0:
            # anti-windup: hold the filter state against the rail
            state.v_ctrl = min(max(v, 0.0), self.v_supply)
            return True
        state.v_c1 = self.m00 * v1 + self.m01 * v + self.n0 * i_pump
        state.v_ctrl = nv
        return False


def filter_step(state: PllState, i_pump: float, filt: LoopFilter, dt: float,
                v_supply: float = math.inf) -> bool:
    return FilterStepper(filt, dt, v_supply).step(state, i_pump)


# --------------------------------------------------------------------------
# Network run


def _peer_lists(config: BehavioralConfig) -> list[list[int]]:
    n = config.size
    out = []
    for k in range(n):
        peers = []
        if config.params[k].enabled:
            if config.scheme != "uncoupled":
                peers = [src for src, _ in in_neighbors(config.topology, config.params, k)]
            if config.reference is not None:
                peers.append(n)  # index n stands for the reference
        out.append(peers)
    return out


def run_behavioral(config: BehavioralConfig) -> SimTrace:
    """Simulate the network; returns a trace of edge-extracted phases with
    ``vctrl``, ``vco_phase`` and ``duty`` channels.

    ``meta`` carries the rising-edge times of every PLL, the fraction of
    steps each PLL spent clamped at, or within 0.1% of, a rail and an overall ``status``
    (``"ok"`` or ``"rail_pinned"``, the latter when any PLL was clamped for
    more than half of the run).
    """
    n = config.size
    dt = config.dt
    n_steps = int(round(config.t_end / dt))
    phases0 = config.initial_phases or (0.0,) * n
    v0 = config.initial_vctrl or (config.v_supply / 2,) * n
    states = [PllState.at(phases0[k], v0[k]) for k in range(n)]
    peers = _peer_lists(config)
    logic = [
        PumpLogic(len(peers[k]), config.scheme, config.edges_per_advance, states[k],
                  TWO_PI / vco_frequency(config.params[k], v0[k]))
        for k in range(n)
    ]
    stepper = FilterStepper(config.filter, dt, config.v_supply)
    rail_eps = 1e-3 * config.v_supply  # within 1 mV of a 1 V rail counts as pinned
    params = config.params
    i_cp = config.i_cp
    enabled = [p.enabled for p in params]
    xor = config.detector == "xor"

    ref_state = None
    if config.reference is not None:
        ref_state = PllState.at(config.reference.phase)
        ref_params = OscillatorParams(config.reference.frequency, vco_gain=1.0)

    lag = config.delay_samples
    ring_len = lag + 1
    ring = [[None] * ring_len for _ in range(n)]
    bits_ring = [[states[k].output] * ring_len for k in range(n)]

    edges: list[list[float]] = [[] for _ in range(n)]
    edge_cycles: list[int | None] = [None] * n
    clamped = [0] * n

    n_samples = n_steps // config.sample_every + 1
    times = np.empty(n_samples)
    vctrl = np.empty((n_samples, n))
    vco_ph = np.empty((n_samples, n))
    duty = np.zeros((n_samples, n))
    duty_acc = [0.0] * n
    times[0] = 0.0
    vctrl[0] = [s.v_ctrl for s in states]
    vco_ph[0] = [s.vco_phase for s in states]
    row = 1

    for step in range(n_steps):
        t = step * dt
        slot = step % ring_len
        own = [None] * n
        bits = [0] * n
        # VCOs advance from the previous step's control voltages (double-buffered)
        for k in range(n):
            e, bits[k] = vco_step(states[k], params[k], dt)
            own[k] = e
            ring[k][slot] = e
            bits_ring[k][slot] = bits[k]
            if e is not None:
                if edge_cycles[k] is None:
                    edge_cycles[k] = states[k].cycles
                edges[k].append(t + e)
        ref_edge = ref_bit = None
        if ref_state is not None:
            ref_edge, ref_bit = vco_step(ref_state, ref_params, dt)
        read = (step - lag) % ring_len
        for k in range(n):
            if not enabled[k]:
                continue
            pk = peers[k]
            if xor:
                if pk:
                    acc = 0.0
                    for j in pk:
                        b = ref_bit if j == n else bits_ring[j][read]
                        acc += 1.0 if b != bits[k] else -1.0
                    i_pump = i_cp * acc / len(pk)
                else:
                    i_pump = 0.0
            else:
                peer_edges = [ref_edge if j == n else (ring[j][read] if step >= lag else None) for j in pk]
                up_t, dn_t = logic[k].step(own[k], peer_edges, dt, t)
                i_pump = i_cp * (up_t - dn_t) / dt
            duty_acc[k] += i_pump / i_cp
            hit = stepper.step(states[k], i_pump)
            v = states[k].v_ctrl
            if hit or v <= rail_eps or v >= config.v_supply - rail_eps:
                clamped[k] += 1
        if (step + 1) % config.sample_every == 0:
            times[row] = (step + 1) * dt
            for k in range(n):
                vctrl[row, k] = states[k].v_ctrl
                vco_ph[row, k] = states[k].vco_phase
                duty[row, k] = duty_acc[k] / config.sample_every
                duty_acc[k] = 0.0
            row += 1

    times = times[:row]
    edge_arrays = [np.asarray(e) for e in edges]
    extracted = np.empty((row, n))
    for k in range(n):
        if edge_arrays[k].size >= 2:
            extracted[:, k] = analysis.edge_phase(edge_arrays[k], edge_cycles[k], times)
        else:
            extracted[:, k] = vco_ph[:row, k]
    pinned = [c / max(n_steps, 1) for c in clamped]
    meta = {
        "dt": dt,
        "tau": config.effective_delay,
        "edges": edge_arrays,
        "pinned_fraction": pinned,
        "status": "rail_pinned" if max(pinned, default=0.0) > 0.5 else "ok",
    }
    return SimTrace(
        times,
        extracted,
        {"vctrl": vctrl[:row], "vco_phase": vco_ph[:row], "duty": duty[:row]},
        meta,
    )


def edge_frequency(edge_times, t_start: float = -math.inf, t_end: float = math.inf) -> float:
    """Mean frequency (rad/s) from rising edges inside a window."""
    e = np.asarray(edge_times)
    e = e[(e >= t_start) & (e <= t_end)]
    if e.size < 2:
        raise DomainError("need at least two edges in the window")
    return TWO_PI * (e.size - 1) / (e[-1] - e[0])


def summarize(trace: SimTrace, config: BehavioralConfig, band: float = 0.02) -> dict:
    """Lock status, mean frequency per PLL over the final third and the
    settling time of each control voltage."""
    t_end = float(trace.times[-1])
    start = 2.0 * t_end / 3.0
    freqs = []
    for e in trace.meta["edges"]:
        try:
            freqs.append(edge_frequency(e, start, t_end))
        except DomainError:
            freqs.append(math.nan)
    freqs_arr = np.array(freqs)
    en = np.array([p.enabled for p in config.params])
    tol = analysis.DEFAULT_LOCK_FRACTION * float(np.mean([p.omega for p in config.params]))
    live = freqs_arr[en]
    if config.reference is not None:
        live = np.append(live, config.reference.frequency)
    locked = bool(np.all(np.isfinite(live)) and (np.ptp(live) < tol if live.size else False))
    if trace.meta["status"] != "ok":
        locked = False
    settle = []
    for k in range(config.size):
        v = trace.channels["vctrl"][:, k]
        settle.append(analysis.settling_time(trace.times, v, band, float(v[-1])))
    return {
        "status": trace.meta["status"],
        "locked": locked,
        "mean_frequency_rad_s": freqs,
        "settling_time_s": settle,
        "effective_delay_s": config.effective_delay,
    }
