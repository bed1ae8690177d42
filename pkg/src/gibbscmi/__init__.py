"""Exact-diagonalization diagnostics for conditional mutual information in quantum Gibbs states."""

from .errors import ConfigError, GibbsCmiError, ModelError, NumericalError, RegionError
from .lattice import Lattice, Region

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "GibbsCmiError",
    "Lattice",
    "ModelError",
    "NumericalError",
    "Region",
    "RegionError",
    "__version__",
]
