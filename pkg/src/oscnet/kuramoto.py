"""Delayed Kuramoto(-Sakaguchi) network integration.

    dtheta_i/dt = omega_i + (K / N_i) * sum_j w_ij sin(theta_j(t - tau) - theta_i(t) - alpha)

The sum runs over enabled in-neighbours j != i. ``N_i`` is the enabled
population (GLOBAL_N) or the enabled in-degree (IN_DEGREE).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    CouplingConfig,
    HistoryBuffer,
    Normalization,
    OscillatorParams,
    as_phase_vector,
)
from .errors import ConfigError, DivergenceError, DomainError, NumericalError
from .topology import Topology, enabled_mask
from .trace import SimTrace

HISTORY_MODES = ("constant", "back_extrapolate")
RATE_GUARD = 1e3


@dataclass(frozen=True)
class KuramotoSystem:
    params: Sequence[OscillatorParams]
    topology: Topology
    coupling: CouplingConfig
    initial_phases: np.ndarray
    history_init: str = "constant"

    def __post_init__(self):
        n = self.topology.size
        if len(self.params) != n:
            raise ConfigError(f"{len(self.params)} oscillator params for a {n}-node topology")
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "initial_phases", as_phase_vector(self.initial_phases, n))
        if self.history_init not in HISTORY_MODES:
            raise ConfigError(f"history_init must be one of {HISTORY_MODES}")

    @property
    def size(self) -> int:
        return self.topology.size

    @property
    def omega(self) -> np.ndarray:
        return np.array([p.omega for p in self.params])

    def history_value(self, s: float) -> np.ndarray:
        """Seeded phase history for s <= 0."""
        if self.history_init == "constant":
            return self.initial_phases.copy()
        return self.initial_phases + self.omega * s


class _Rhs:
    """Precomputed right-hand side: dense weights, normalisation, lag."""

    def __init__(self, system: KuramotoSystem):
        self.omega = system.omega
        mask = enabled_mask(system.params, system.size)
        self.w = system.topology.weight_matrix(system.params)
        c = system.coupling
        if c.normalization is Normalization.GLOBAL_N:
            n_enabled = int(mask.sum())
            scale = np.full(system.size, c.strength / max(n_enabled, 1))
        else:
            deg = np.count_nonzero(self.w, axis=1)
            scale = np.where(deg > 0, c.strength / np.maximum(deg, 1), 0.0)
        self.scale = np.where(mask, scale, 0.0)
        self.alpha = c.phase_lag
        self.coupled = bool(np.any(self.w) and c.strength > 0)

    def __call__(self, theta: np.ndarray, delayed: np.ndarray) -> np.ndarray:
        if not self.coupled:
            return self.omega.copy()
        diff = delayed[np.newaxis, :] - theta[:, np.newaxis]
        if self.alpha:
            diff = diff - self.alpha
        return self.omega + self.scale * np.sum(self.w * np.sin(diff), axis=1)


def derivative(system: KuramotoSystem, t: float, phases, history: HistoryBuffer | None = None):
    """Instantaneous phase velocities (rad/s).

    With a positive delay the remote phases are read from ``history`` at
    ``t - tau``; with zero delay ``history`` is not consulted.
    """
    theta = as_phase_vector(phases, system.size)
    tau = system.coupling.delay
    if tau > 0:
        if history is None:
            raise ConfigError("a history buffer is required when delay > 0")
        delayed = np.asarray(history.sample(t - tau), dtype=np.float64)
    else:
        delayed = theta
    return _Rhs(system)(theta, delayed)


def _check_step(dt: float, tau: float, t_end: float) -> None:
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if tau > 0 and dt > tau / 10 * (1 + 1e-9):
        raise ConfigError(f"dt={dt:g} s must not exceed delay/10 = {tau / 10:g} s")
    if t_end < dt:
        raise ConfigError("t_end must be at least one step")


def integrate(
    system: KuramotoSystem,
    dt: float,
    t_end: float,
    sample_every: int = 1,
    events: Sequence[tuple[float, int, bool]] = (),
) -> SimTrace:
    """Fixed-step RK4 integration.

    Delayed phases are read from a linear-interpolating history buffer at
    each stage time minus tau; since dt <= tau/10, every lookup falls on
    already-computed samples. Returns samples at t = 0 and every
    ``sample_every`` steps.

    ``events`` are ``(time, oscillator, enabled)`` switches applied at the
    first step boundary at or after ``time``.
    """
    tau = system.coupling.delay
    _check_step(dt, tau, t_end)
    if sample_every < 1:
        raise ConfigError("sample_every must be >= 1")
    n_steps = int(round(t_end / dt))
    rhs = _Rhs(system)
    theta = system.initial_phases.copy()
    n = system.size
    guard = RATE_GUARD * float(np.max(rhs.omega))

    history = None
    if tau > 0:
        history = HistoryBuffer.for_delay(dt, tau + dt, width=n)
        back = history.capacity - 1
        for k in range(back, 0, -1):
            history.push(-k * dt, system.history_value(-k * dt))
        history.push(0.0, theta)

    n_samples = n_steps // sample_every + 1
    times = np.empty(n_samples)
    out = np.empty((n_samples, n))
    times[0] = 0.0
    out[0] = theta
    half = 0.5 * dt
    row = 1
    pending = sorted(events, key=lambda e: e[0])
    for _, i, _ in pending:
        system.topology.check_id(i)
    params = list(system.params)
    for step in range(n_steps):
        t = step * dt
        if pending and pending[0][0] <= t + 1e-9 * dt:
            while pending and pending[0][0] <= t + 1e-9 * dt:
                _, i, flag = pending.pop(0)
                params[i] = params[i].with_enabled(flag)
            rhs = _Rhs(replace(system, params=tuple(params)))
        if history is None:
            k1 = rhs(theta, theta)
            y = theta + half * k1
            k2 = rhs(y, y)
            y = theta + half * k2
            k3 = rhs(y, y)
            y = theta + dt * k3
            k4 = rhs(y, y)
        else:
            d0 = history.sample(t - tau)
            dmid = history.sample(t + half - tau)
            d1 = history.sample(t + dt - tau)
            k1 = rhs(theta, d0)
            k2 = rhs(theta + half * k1, dmid)
            k3 = rhs(theta + half * k2, dmid)
            k4 = rhs(theta + dt * k3, d1)
        rate = (k1 + 2.0 * (k2 + k3) + k4) / 6.0
        if not np.all(np.isfinite(rate)) or np.max(np.abs(rate)) > guard:
            raise DivergenceError("phase velocity left the admissible range", time=t)
        theta = theta + dt * rate
        if history is not None:
            history.push((step + 1) * dt, theta)
        if (step + 1) % sample_every == 0:
            times[row] = (step + 1) * dt
            out[row] = theta
            row += 1
    return SimTrace(
        times[:row],
        out[:row],
        meta={"dt": dt, "tau": tau, "K": system.coupling.strength, "alpha": system.coupling.phase_lag,
              "enabled": np.array([q.enabled for q in params])},
    )


def self_excluded_factor(n: int) -> float:
    """Effective coupling factor on the synchronous manifold of an N-node
    all-to-all graph with GLOBAL_N normalisation and no self-term."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return (n - 1) / n


def sync_frequency_prediction(
    omega: float,
    K: float,
    tau: float,
    coupling_factor: float = 1.0,
    *,
    max_iter: int = 10_000,
    rtol: float = 1e-14,
) -> float:
    """Collective frequency of the in-phase state, solving
    ``Omega = omega - K * c * sin(Omega * tau)``.

    Damped fixed-point iteration is continued in tau from Omega(0) = omega,
    then the root is polished by bisection on a sign-changing bracket.
    """
    if not all(math.isfinite(x) for x in (omega, K, tau, coupling_factor)):
        raise DomainError("arguments must be finite")
    if tau < 0 or K < 0:
        raise DomainError("tau and K must be non-negative")
    kc = K * coupling_factor
    if tau == 0 or kc == 0:
        return float(omega)

    def g(x):
        return x - omega + kc * math.sin(x * tau)

    # continuation keeps the root on the branch that starts at omega
    n_cont = max(1, int(math.ceil(kc * tau * 4)))
    lam = 1.0 / (1.0 + kc * tau)
    x = float(omega)
    used = 0
    for j in range(1, n_cont + 1):
        tj = tau * j / n_cont
        for _ in range(max_iter):
            used += 1
            if used > max_iter:
                raise NumericalError(f"fixed-point iteration did not converge in {max_iter} steps")
            nxt = x + lam * (omega - kc * math.sin(x * tj) - x)
            if abs(nxt - x) <= 1e-12 * max(abs(x), 1.0):
                x = nxt
                break
            x = nxt

    scale = max(abs(x), 1.0)
    delta = 1e-9 * scale
    lo, hi = x - delta, x + delta
    while g(lo) * g(hi) > 0:
        delta *= 2
        lo, hi = x - delta, x + delta
        if delta > 4 * (kc + 1.0) * scale:
            raise NumericalError("could not bracket the synchronous frequency")
    glo = g(lo)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0 or (hi - lo) <= rtol * scale:
            return mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)
