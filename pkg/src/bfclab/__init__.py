"""Biphoton frequency comb modelling, simulation and analysis."""
__version__ = "0.1.0"

from .core_model import (CombParams, CorrelationTrace, DetectorParams, FilterMode, TraceKind,
                         cross_correlation, spectral_density, temporal_wavefunction)
from .errors import BfcLabError, ConfigError, NumericalError

__all__ = [
    "__version__", "CombParams", "CorrelationTrace", "DetectorParams", "FilterMode", "TraceKind",
    "cross_correlation", "spectral_density", "temporal_wavefunction",
    "BfcLabError", "ConfigError", "NumericalError",
]
