"""
Six-state quantum key distribution: Jones-calculus optics, a seeded session
engine with an optional intercept-resend eavesdropper, statistics against
analytic benchmarks, and the tabletop configuration table.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigTableError,
    ConfigurationError,
    NoDataError,
    PulseLogError,
    SixStateError,
    UnresolvedConfigError,
)
from .polarization import Basis, JonesMatrix, JonesVector, PolState
from .protocol import (
    AttackModel,
    NoiseModel,
    ProtocolKind,
    PulseRecord,
    SessionConfig,
    SessionRunner,
    SiftSummary,
    run_session,
    sift,
)
from .stats import BenchmarkReport, CorrelationMatrix, compare_to_benchmarks, correlation_matrix

__all__ = [
    "__version__",
    "AttackModel",
    "Basis",
    "BenchmarkReport",
    "ConfigTableError",
    "ConfigurationError",
    "CorrelationMatrix",
    "JonesMatrix",
    "JonesVector",
    "NoDataError",
    "NoiseModel",
    "PolState",
    "ProtocolKind",
    "PulseLogError",
    "PulseRecord",
    "SessionConfig",
    "SessionRunner",
    "SiftSummary",
    "SixStateError",
    "UnresolvedConfigError",
    "compare_to_benchmarks",
    "correlation_matrix",
    "run_session",
    "sift",
]
