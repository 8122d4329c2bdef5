"""Simulation and analysis of delay-coupled oscillator and PLL networks."""

from .core import CouplingConfig, HistoryBuffer, Normalization, OscillatorParams, wrap_phase
from .errors import (
    AnalysisError,
    ConfigError,
    DesignError,
    DivergenceError,
    DomainError,
    NumericalError,
    OscnetError,
    OutOfWindowError,
)
from .topology import Topology, build_clustered
from .trace import SimTrace

__version__ = "0.1.0"
