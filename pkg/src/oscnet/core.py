"""Shared types, unit helpers and phase arithmetic.

Internal units are rad/s for every frequency and seconds for every time.
Phases are kept unwrapped; :func:`wrap_phase` is only applied where a
bounded difference is needed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DomainError, OutOfWindowError

TWO_PI = 2.0 * math.pi


def hz_to_rad(f_hz):
    return TWO_PI * f_hz


def rad_to_hz(omega):
    return omega / TWO_PI


def wrap_phase(theta):
    """Map phase(s) into [-pi, pi).

    Works on scalars and arrays. Raises DomainError on non-finite input.
    """
    arr = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("phase must be finite")
    wrapped = np.mod(arr + math.pi, TWO_PI) - math.pi
    # mod can round up to exactly 2*pi for tiny negative arguments
    wrapped = np.where(wrapped >= math.pi, wrapped - TWO_PI, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def as_phase_vector(values, n=None) -> np.ndarray:
    """Validate and copy a phase vector (finite, 1-D, optional length check)."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if n is not None and arr.size != n:
        raise DomainError(f"expected {n} phases, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("phases must be finite")
    return arr


@dataclass(frozen=True)
class OscillatorParams:
    """Per-oscillator constants.

    ``natural_frequency`` and ``center_frequency_offset`` are rad/s; the
    offset models the resistor-programmable center frequency of the VCO.
    ``vco_gain`` is in Hz/V, as VCO sensitivities are usually quoted.
    """

    natural_frequency: float
    center_frequency_offset: float = 0.0
    vco_gain: float = 3e6
    enabled: bool = True

    def __post_init__(self):
        if not (self.natural_frequency > 0 and math.isfinite(self.natural_frequency)):
            raise DomainError("natural_frequency must be positive and finite")
        if not (self.vco_gain > 0 and math.isfinite(self.vco_gain)):
            raise DomainError("vco_gain must be positive and finite")
        if not math.isfinite(self.center_frequency_offset):
            raise DomainError("center_frequency_offset must be finite")

    @property
    def omega(self) -> float:
        """Effective free-running frequency in rad/s."""
        return self.natural_frequency + self.center_frequency_offset

    def with_enabled(self, flag: bool) -> "OscillatorParams":
        return replace(self, enabled=bool(flag))


def uniform_params(n: int, omega: float | Sequence[float], **kwargs) -> list[OscillatorParams]:
    """Build ``n`` OscillatorParams from a scalar or per-oscillator frequency list."""
    omegas = np.broadcast_to(np.asarray(omega, dtype=np.float64), (n,))
    return [OscillatorParams(float(w), **kwargs) for w in omegas]


class Normalization(enum.Enum):
    GLOBAL_N = "global_n"
    IN_DEGREE = "in_degree"


@dataclass(frozen=True)
class CouplingConfig:
    """Coupling strength K (rad/s), delay tau (s) and Sakaguchi phase lag alpha (rad)."""

    strength: float
    delay: float = 0.0
    phase_lag: float = 0.0
    normalization: Normalization = Normalization.GLOBAL_N

    def __post_init__(self):
        if not (self.strength >= 0 and math.isfinite(self.strength)):
            raise DomainError("coupling strength must be >= 0")
        if not (self.delay >= 0 and math.isfinite(self.delay)):
            raise DomainError("delay must be >= 0")
        if not (0.0 <= self.phase_lag <= math.pi / 2):
            raise DomainError("phase_lag must lie in [0, pi/2]")


class HistoryBuffer:
    """Fixed-step ring buffer of past samples with linear interpolation.

    Samples are pushed at times ``t0, t0 + h, t0 + 2h, ...``; values may be
    scalars or fixed-length vectors. ``capacity`` samples are retained, so
    the readable window is ``[t_latest - (capacity - 1) h, t_latest]``.
    """

    def __init__(self, step: float, capacity: int, width: int | None = None):
        if not step > 0:
            raise DomainError("history step must be positive")
        if capacity < 1:
            raise DomainError("history capacity must be >= 1")
        self.step = float(step)
        self.capacity = int(capacity)
        self.width = width
        shape = (self.capacity,) if width is None else (self.capacity, width)
        self._data = np.zeros(shape, dtype=np.float64)
        self._head = -1
        self._count = 0
        self._t_latest = math.nan

    @classmethod
    def for_delay(cls, step: float, max_delay: float, width: int | None = None):
        """Size a buffer so that any lookup up to ``max_delay`` back succeeds."""
        capacity = int(math.ceil(max_delay / step - 1e-9)) + 2
        return cls(step, capacity, width)

    def __len__(self):
        return self._count

    @property
    def t_latest(self) -> float:
        return self._t_latest

    @property
    def t_oldest(self) -> float:
        return self._t_latest - (self._count - 1) * self.step

    @property
    def horizon(self) -> float:
        """Longest look-back currently available."""
        return (self._count - 1) * self.step

    def push(self, t: float, value) -> None:
        if self._count and abs((t - self._t_latest) - self.step) > 1e-6 * self.step:
            raise DomainError(
                f"history samples must be spaced by {self.step:g}, got {t - self._t_latest:g}"
            )
        self._head = (self._head + 1) % self.capacity
        self._data[self._head] = value
        self._count = min(self._count + 1, self.capacity)
        self._t_latest = float(t)

    def latest(self):
        return self._data[self._head]

    def _back(self, k: int):
        return self._data[(self._head - k) % self.capacity]

    def sample(self, t_query: float):
        """Value at ``t_query`` by linear interpolation between bracketing samples."""
        if self._count == 0:
            raise OutOfWindowError("history buffer is empty")
        back = (self._t_latest - t_query) / self.step
        nearest = round(back)
        if abs(back - nearest) < 1e-9:
            back = float(nearest)
        if back < 0:
            raise OutOfWindowError(f"t={t_query:g} is later than the newest sample")
        if back > self._count - 1:
            raise OutOfWindowError(
                f"t={t_query:g} is older than the history window "
                f"(horizon {self.horizon:g} s); delay exceeds configured capacity"
            )
        k = int(math.floor(back))
        frac = back - k
        v0 = self._back(k)
        if frac == 0.0:
            return v0.copy() if isinstance(v0, np.ndarray) and v0.ndim else float(v0)
        v1 = self._back(k + 1)
        return v0 + frac * (v1 - v0)


def history_sample(buffer: HistoryBuffer, t_query: float):
    return buffer.sample(t_query)
