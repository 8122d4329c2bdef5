"""Synchronisation metrics over simulation traces."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import TWO_PI, OscillatorParams
from .errors import DomainError
from .topology import Topology, enabled_mask, in_neighbors
from .trace import SimTrace

DEFAULT_LOCK_FRACTION = 1e-3


@dataclass(frozen=True)
class OrderParameterSeries:
    times: np.ndarray
    r: np.ndarray
    psi: np.ndarray


def order_parameter(phases, enabled=None):
    """Kuramoto order parameter ``(r, psi)`` of one phase vector, or of each
    row of a (samples, oscillators) array."""
    th = np.asarray(phases, dtype=np.float64)
    mask = np.ones(th.shape[-1], dtype=bool) if enabled is None else np.asarray(enabled, dtype=bool)
    if not mask.any():
        raise DomainError("order parameter needs at least one enabled oscillator")
    z = np.mean(np.exp(1j * th[..., mask]), axis=-1)
    r = np.minimum(np.abs(z), 1.0)
    if np.ndim(r) == 0:
        return float(r), float(np.angle(z))
    return r, np.angle(z)


def order_parameter_series(trace: SimTrace, params: Sequence[OscillatorParams] | None = None):
    mask = enabled_mask(params, trace.n_oscillators)
    r, psi = order_parameter(trace.phases, mask)
    return OrderParameterSeries(trace.times, np.atleast_1d(r), np.atleast_1d(psi))


def _windows(topology: Topology, params, window: str) -> list[list[int]]:
    mask = enabled_mask(params, topology.size)
    out = []
    for i in range(topology.size):
        if not mask[i]:
            out.append([])
        elif window == "cluster":
            c = topology.cluster_of[i]
            out.append([j for j in topology.members(c) if mask[j]])
        elif window == "neighbors":
            out.append([i] + [j for j, _ in in_neighbors(topology, params, i)])
        else:
            raise DomainError(f"unknown window {window!r}")
    return out


def local_order(phases, topology: Topology, window: str = "cluster", params=None) -> np.ndarray:
    """Order parameter of each oscillator's cluster or neighbourhood
    (including itself). NaN marks an empty window (disabled oscillator).

    Accepts one phase vector or a (samples, oscillators) array.
    """
    th = np.asarray(phases, dtype=np.float64)
    z = np.exp(1j * th)
    out = np.full(th.shape, np.nan)
    for i, members in enumerate(_windows(topology, params, window)):
        if members:
            out[..., i] = np.minimum(np.abs(np.mean(z[..., members], axis=-1)), 1.0)
    return out


def cluster_order(phases, topology: Topology, params=None) -> np.ndarray:
    """Order parameter of each cluster; shape (..., n_clusters)."""
    th = np.asarray(phases, dtype=np.float64)
    mask = enabled_mask(params, topology.size)
    out = np.full(th.shape[:-1] + (topology.n_clusters,), np.nan)
    for c in range(topology.n_clusters):
        members = [j for j in topology.members(c) if mask[j]]
        if members:
            out[..., c] = np.minimum(np.abs(np.mean(np.exp(1j * th[..., members]), axis=-1)), 1.0)
    return out


def chimera_index(trace: SimTrace, topology: Topology, params=None) -> float:
    """Variance across clusters of the cluster order parameter, time-averaged
    over the final half of the trace. Zero when every cluster behaves alike."""
    half = trace.phases[trace.phases.shape[0] // 2:]
    rc = cluster_order(half, topology, params)
    avg = np.nanmean(rc, axis=0)
    avg = avg[np.isfinite(avg)]
    if avg.size == 0:
        return math.nan
    return float(np.var(avg))


def mean_frequency(trace: SimTrace, t_start: float | None = None, t_end: float | None = None) -> np.ndarray:
    """Average phase velocity of each oscillator over a window (rad/s)."""
    t = trace.times
    t_start = t[0] if t_start is None else t_start
    t_end = t[-1] if t_end is None else t_end
    idx = np.nonzero((t >= t_start - 1e-15) & (t <= t_end + 1e-15))[0]
    if idx.size < 10:
        raise DomainError(f"window [{t_start:g}, {t_end:g}] holds fewer than 10 samples")
    a, b = idx[0], idx[-1]
    return (trace.phases[b] - trace.phases[a]) / (t[b] - t[a])


def settling_time(times, values, band: float, final: float) -> float | None:
    """Earliest sample time after which ``values`` stays within
    ``band * |final|`` of ``final``. None when the last sample is still
    outside the band."""
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.shape != v.shape or t.size == 0:
        raise DomainError("times and values must be aligned and non-empty")
    outside = np.nonzero(np.abs(v - final) > band * abs(final))[0]
    if outside.size == 0:
        return float(t[0])
    last = outside[-1]
    if last == t.size - 1:
        return None
    return float(t[last + 1])


@dataclass(frozen=True)
class LockResult:
    locked: bool
    spread: float
    frequencies: np.ndarray


def lock_detect(trace: SimTrace, tol: float | None = None, params=None) -> LockResult:
    """Locked iff the spread of mean frequencies over the final third of the
    trace is below ``tol`` (default 1e-3 of the mean frequency)."""
    mask = enabled_mask(params, trace.n_oscillators)
    t0, t1 = trace.times[0], trace.times[-1]
    f = mean_frequency(trace, t0 + 2.0 * (t1 - t0) / 3.0, t1)
    live = f[mask]
    if tol is None:
        tol = DEFAULT_LOCK_FRACTION * abs(float(np.mean(live)))
    spread = float(np.ptp(live)) if live.size else 0.0
    return LockResult(bool(spread < tol), spread, f)


def edge_phase(edge_times, first_cycle: int, sample_times) -> np.ndarray:
    """Unwrapped phase from rising-edge times.

    Edge m sits at phase 2 pi (first_cycle + m); between edges the phase is
    linear in time, and outside the edge record it is extrapolated with the
    nearest measured period.
    """
    e = np.asarray(edge_times, dtype=np.float64)
    if e.size < 2:
        raise DomainError("need at least two edges")
    ts = np.asarray(sample_times, dtype=np.float64)
    cyc = first_cycle + np.arange(e.size, dtype=np.float64)
    out = np.interp(ts, e, cyc)
    lo = ts < e[0]
    hi = ts > e[-1]
    out[lo] = cyc[0] - (e[0] - ts[lo]) / (e[1] - e[0])
    out[hi] = cyc[-1] + (ts[hi] - e[-1]) / (e[-1] - e[-2])
    return TWO_PI * out
