"""Nonlinear-interference modeling for fiber links carrying shaped symbols."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    FiberNLIError,
    ParameterError,
    SchemaError,
    SimulationError,
    UsageError,
)
from .kernels import QuadratureConfig, build_kernel_grid, kernel_table
from .linkmodel import LinkConfig, PulseShape
from .megn import MEGNConfig, NLIResult, NLISpectrum, assemble, eta_and_snr, predict
from .shaping import ShapingScheme, SymbolStream, generate_stream, make_composition
from .stats import AmplitudeComposition, CovarianceSet, analytic_covariances, empirical_covariances

__all__ = [
    "AmplitudeComposition",
    "ConfigError",
    "CovarianceSet",
    "DataError",
    "FiberNLIError",
    "LinkConfig",
    "MEGNConfig",
    "NLIResult",
    "NLISpectrum",
    "ParameterError",
    "PulseShape",
    "QuadratureConfig",
    "SchemaError",
    "ShapingScheme",
    "SimulationError",
    "SymbolStream",
    "UsageError",
    "analytic_covariances",
    "assemble",
    "build_kernel_grid",
    "empirical_covariances",
    "eta_and_snr",
    "generate_stream",
    "kernel_table",
    "make_composition",
    "predict",
]
