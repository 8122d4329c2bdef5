"""Uniformly sampled simulation output and its CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError


def fmt(x) -> str:
    """Full-precision float text (17 significant digits)."""
    return format(float(x), ".17g")


@dataclass
class SimTrace:
    """Time series on a uniform grid.

    ``phases`` has shape (samples, oscillators). ``channels`` holds extra
    per-sample arrays of shape (samples,) or (samples, oscillators), e.g.
    control voltages or pump duty.
    """

    times: np.ndarray
    phases: np.ndarray
    channels: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.phases.ndim != 2 or self.phases.shape[0] != self.times.size:
            raise DomainError("phases must be (samples, oscillators) aligned with times")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise DomainError("sample times must be strictly increasing")

    @property
    def n_oscillators(self) -> int:
        return self.phases.shape[1]

    @property
    def sample_step(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def window(self, t_start: float, t_end: float) -> "SimTrace":
        sel = (self.times >= t_start - 1e-15) & (self.times <= t_end + 1e-15)
        ch = {k: v[sel] for k, v in self.channels.items()}
        return SimTrace(self.times[sel], self.phases[sel], ch, dict(self.meta))


def _write_rows(path, header, rows) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) if not isinstance(x, str) else x for x in row])


def write_columns(path, names, columns) -> None:
    """Write equally long 1-D columns as a CSV with a header row."""
    cols = [np.asarray(c) for c in columns]
    _write_rows(path, names, zip(*cols))


def write_phase_csv(trace: SimTrace, path) -> None:
    n = trace.n_oscillators
    names = ["t"] + [f"theta_{i}" for i in range(n)]
    _write_rows(path, names, (np.concatenate(([t], row)) for t, row in zip(trace.times, trace.phases)))


def write_behavioral_csv(trace: SimTrace, path) -> None:
    n = trace.n_oscillators
    vctrl = trace.channels["vctrl"]
    names = ["t"] + [f"vctrl_{i}" for i in range(n)] + [f"phase_{i}" for i in range(n)]
    rows = (np.concatenate(([t], v, p)) for t, v, p in zip(trace.times, vctrl, trace.phases))
    _write_rows(path, names, rows)


def read_trace_csv(path) -> SimTrace:
    """Read either phase-trace dialect back; ``vctrl_*`` columns become a channel."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    data = np.array([[float(x) for x in row] for row in reader if row], dtype=np.float64)
    if data.size == 0:
        data = data.reshape(0, len(header))
    if header[0] != "t":
        raise DomainError("trace CSV must start with a 't' column")
    theta_cols = [i for i, h in enumerate(header) if h.startswith(("theta_", "phase_"))]
    vctrl_cols = [i for i, h in enumerate(header) if h.startswith("vctrl_")]
    channels = {"vctrl": data[:, vctrl_cols]} if vctrl_cols else {}
    return SimTrace(data[:, 0], data[:, theta_cols], channels)
