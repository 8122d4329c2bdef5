"""Type-2, third-order charge-pump PLL: loop-filter synthesis, Bode analysis,
phase margin, closed-loop step response and the capacitance trade-off.

Loop filter: series R-C1 branch shunted by C2, driven by the charge pump.

    Z(s) = (1 + s/wz) / (s (C1 + C2) (1 + s/wp)),  wz = 1/(R C1),
    wp = (C1 + C2)/(R C1 C2)
    G(s) = Kpd * Kvco * Z(s) / (N s),  Kpd = Icp / 2pi [A/rad],  Kvco [rad/s/V]

which gives the closed loop

    H(s) = k (s + wz) / (s^3 + wp s^2 + k s + k wz),  k = Kpd Kvco / (N C2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TWO_PI
from .errors import AnalysisError, DesignError, DomainError
from .trace import SimTrace


@dataclass(frozen=True)
class LoopParams:
    """Charge-pump loop constants. ``k_vco`` is in Hz/V, ``target_crossover``
    in rad/s, ``target_phase_margin`` in degrees."""

    k_vco: float = 3e6
    i_cp: float = 1.34e-6
    divider_n: int = 1
    target_phase_margin: float = 74.0
    target_crossover: float = TWO_PI * 27e3

    def __post_init__(self):
        for name in ("k_vco", "i_cp", "target_phase_margin", "target_crossover"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be positive and finite")
        if int(self.divider_n) != self.divider_n or self.divider_n < 1:
            raise DomainError("divider_n must be a positive integer")

    @property
    def k_pd(self) -> float:
        """Phase-detector gain in A/rad."""
        return self.i_cp / TWO_PI

    @property
    def k_vco_rad(self) -> float:
        """VCO gain in rad/s per volt."""
        return TWO_PI * self.k_vco


@dataclass(frozen=True)
class LoopFilter:
    r: float
    c1: float
    c2: float

    def __post_init__(self):
        if not (self.r > 0 and self.c1 > 0 and self.c2 > 0):
            raise DomainError("r, c1 and c2 must be positive")

    @property
    def c_total(self) -> float:
        return self.c1 + self.c2

    @property
    def omega_z(self) -> float:
        return 1.0 / (self.r * self.c1)

    @property
    def omega_p(self) -> float:
        return (self.c1 + self.c2) / (self.r * self.c1 * self.c2)

    def impedance(self, s):
        return (1 + s / self.omega_z) / (s * self.c_total * (1 + s / self.omega_p))


@dataclass(frozen=True)
class FrequencyResponse:
    frequencies: np.ndarray
    gain: np.ndarray
    phase: np.ndarray


def spread_ratio(phase_margin_deg: float) -> float:
    """Pole/zero ratio wp/wz that puts the maximum phase lead at crossover."""
    s = math.sin(math.radians(phase_margin_deg))
    return (1 + s) / (1 - s)


def design_loop(params: LoopParams) -> LoopFilter:
    """Maximum-phase-margin placement: the lead peak sits on the target
    crossover and the total capacitance sets unity loop gain there."""
    pm = params.target_phase_margin
    if not 0 < pm < 90:
        raise DesignError(f"phase margin {pm:g} deg cannot be met by this loop (need 0 < pm < 90)")
    b = spread_ratio(pm)
    wc = params.target_crossover
    wz = wc / math.sqrt(b)
    # |G(j wc)| = Kpd Kvco sqrt(b) / (N wc^2 Ct) at the geometric mean of wz, wp
    c_total = params.k_pd * params.k_vco_rad * math.sqrt(b) / (params.divider_n * wc**2)
    c2 = c_total / b
    c1 = c_total - c2
    return LoopFilter(r=1.0 / (wz * c1), c1=c1, c2=c2)


def open_loop(filt: LoopFilter, params: LoopParams, omega):
    """Complex open-loop gain G(j omega)."""
    s = 1j * np.asarray(omega, dtype=np.float64)
    return params.k_pd * params.k_vco_rad * filt.impedance(s) / (params.divider_n * s)


def open_loop_response(filt: LoopFilter, params: LoopParams, grid) -> FrequencyResponse:
    w = np.asarray(grid, dtype=np.float64)
    if w.ndim != 1 or np.any(w <= 0) or np.any(np.diff(w) <= 0):
        raise DomainError("frequency grid must be positive and strictly increasing")
    g = open_loop(filt, params, w)
    phase = np.degrees(np.unwrap(np.angle(g)))
    # shift whole turns so the curve sits in the (-270, -90] band of a type-2 loop
    phase -= 360.0 * np.round((phase[0] + 180.0) / 360.0)
    return FrequencyResponse(w, 20 * np.log10(np.abs(g)), phase)


def crossover(filt: LoopFilter, params: LoopParams, bracket=None, rtol=1e-9) -> float:
    """Unity-gain frequency by bisection (gain is monotone for this class)."""
    wc = params.target_crossover
    lo, hi = bracket or (wc / 100, 100 * wc)

    def excess(w):
        return abs(open_loop(filt, params, w)) - 1.0

    if excess(lo) < 0 or excess(hi) > 0:
        raise AnalysisError(f"no unity-gain crossover in [{lo:.4g}, {hi:.4g}] rad/s")
    while hi - lo > rtol * lo:
        mid = math.sqrt(lo * hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def phase_margin(filt: LoopFilter, params: LoopParams) -> float:
    """180 deg + arg G at the unity-gain crossover, in degrees."""
    wx = crossover(filt, params)
    # arg G = -180 + atan(w/wz) - atan(w/wp); computed directly to avoid branch cuts
    lead = math.atan(wx / filt.omega_z) - math.atan(wx / filt.omega_p)
    return math.degrees(lead)


def closed_loop_coefficients(k_pd, k_vco_rad, c2, omega_z, omega_p, divider_n=1):
    """Numerator and denominator (highest power first) of phi_out/phi_in.

    Plain arithmetic, so symbolic arguments work as well.
    """
    k = k_pd * k_vco_rad / (divider_n * c2)
    num = [k * divider_n, k * divider_n * omega_z]
    den = [1, omega_p, k, k * omega_z]
    return num, den


def _rk4_propagator(a: np.ndarray, b: np.ndarray, h: float):
    """RK4 applied to x' = A x + B u with u held constant over a step is
    exactly x+ = P x + Q u; build P and Q."""
    n = a.shape[0]
    ha = h * a
    eye = np.eye(n)
    ha2 = ha @ ha
    ha3 = ha2 @ ha
    p = eye + ha + ha2 / 2 + ha3 / 6 + ha3 @ ha / 24
    q = h * (eye + ha / 2 + ha2 / 6 + ha3 / 24) @ b
    return p, q


def closed_loop_step(
    filt: LoopFilter, params: LoopParams, dt: float | None = None, t_end: float = 600e-6
) -> SimTrace:
    """Response of phi_out to a unit phase step, integrated with RK4 on the
    controllable-canonical realisation of H(s).

    RK4 on a linear system with a held input is an exact linear recursion,
    which is evaluated in closed form block by block.
    """
    wz, wp = filt.omega_z, filt.omega_p
    if dt is None:
        dt = 1e-2 / wp
    if dt > 1e-2 / wp * (1 + 1e-12):
        raise DomainError(f"dt must be <= 1e-2/omega_p = {1e-2 / wp:.4g} s")
    if t_end < dt:
        raise DomainError("t_end must cover at least one step")
    num, den = closed_loop_coefficients(params.k_pd, params.k_vco_rad, filt.c2, wz, wp, params.divider_n)
    a2, a1, a0 = den[1], den[2], den[3]
    a = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-a0, -a1, -a2]])
    b = np.array([0.0, 0.0, 1.0])
    c = np.array([num[1], num[0], 0.0])
    p, q = _rk4_propagator(a, b, dt)
    n_steps = int(round(t_end / dt))
    # The recursion x[k+1] = P x[k] + Q has the fixed point xs = (I - P)^-1 Q,
    # so x[k] = xs + P^k (x[0] - xs). Evaluate it in blocks with a table of
    # powers instead of a Python-level loop over every step.
    xs = np.linalg.solve(np.eye(3) - p, q)
    block = min(n_steps, 4096)
    powers = np.empty((block + 1, 3, 3))
    powers[0] = np.eye(3)
    m = 1
    while m <= block:
        top = min(2 * m, block + 1)
        powers[m:top] = powers[: top - m] @ np.linalg.matrix_power(p, m)
        m = top
    cp = c @ powers  # row k holds c^T P^k
    out = np.empty(n_steps + 1)
    out[0] = 0.0
    limit = 10.0 * params.divider_n
    y_ss = c @ xs
    dev = -xs
    done = 0
    while done < n_steps:
        span = min(block, n_steps - done)
        y = y_ss + cp[1 : span + 1] @ dev
        if not np.all(np.abs(y) <= limit):
            raise AnalysisError(f"step response exceeded {limit:g}: loop is unstable")
        out[done + 1 : done + span + 1] = y
        dev = powers[span] @ dev
        done += span
    times = np.arange(n_steps + 1) * dt
    return SimTrace(times, out[:, np.newaxis], {"phi_out": out}, {"dt": dt})


def overshoot(step: SimTrace, final: float = 1.0) -> float:
    return max(0.0, float(step.phases[:, 0].max()) / final - 1.0)


def capacitance_sweep(params: LoopParams, base: LoopFilter, c2_grid, mode: str = "scaled"):
    """Phase margin versus C2.

    ``mode="scaled"`` keeps R and the C1/C2 ratio of ``base`` (the filter's
    capacitance is scaled as a whole); ``mode="c2_only"`` keeps R and C1 fixed.
    Returns ``(rows, best)`` where rows are ``(c2, margin_deg)`` with NaN for
    points whose crossover falls outside the search bracket, and ``best`` is
    the grid C2 with the largest margin.
    """
    grid = np.asarray(c2_grid, dtype=np.float64)
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise DomainError("C2 grid must be positive and strictly increasing")
    if mode not in ("scaled", "c2_only"):
        raise DomainError(f"unknown sweep mode {mode!r}")
    rows = []
    for c2 in grid:
        if mode == "scaled":
            f = LoopFilter(base.r, base.c1 * c2 / base.c2, c2)
        else:
            f = LoopFilter(base.r, base.c1, c2)
        try:
            margin = phase_margin(f, params)
        except AnalysisError:
            margin = math.nan
        rows.append((float(c2), margin))
    margins = np.array([m for _, m in rows])
    best = float(grid[np.nanargmax(margins)]) if np.any(np.isfinite(margins)) else math.nan
    return rows, best


def design_report(filt: LoopFilter, params: LoopParams) -> dict:
    """Key quantities of a designed loop, in display units."""
    return {
        "k_vco_hz_per_v": params.k_vco,
        "i_cp_a": params.i_cp,
        "k_pd_a_per_rad": params.k_pd,
        "divider_n": params.divider_n,
        "target_phase_margin_deg": params.target_phase_margin,
        "target_crossover_rad_s": params.target_crossover,
        "r_ohm": filt.r,
        "c1_f": filt.c1,
        "c2_f": filt.c2,
        "omega_z_rad_s": filt.omega_z,
        "omega_p_rad_s": filt.omega_p,
        "crossover_rad_s": crossover(filt, params),
        "phase_margin_deg": phase_margin(filt, params),
    }
