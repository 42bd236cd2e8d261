"""Multi-channel squeezed-light simulator with a shared atomic spin reservoir."""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, FlysqError, GeometryError, NumericalError, ParameterError
from .geometry import CellConfig, ChannelConfig, build_region_graph, exchange_matrix, transit_time
from .spin import AtomParams, assemble_drift, simulate_langevin, spin_noise_psd, steady_state
from .optics import OpticalParams, min_variance, noise_spectrum, shear_covariance, to_decibel
from .model import evaluate
from .config import RunConfig, parse_config

__all__ = [
    "__version__",
    "AtomParams",
    "CellConfig",
    "ChannelConfig",
    "ConfigError",
    "DomainError",
    "FlysqError",
    "GeometryError",
    "NumericalError",
    "OpticalParams",
    "ParameterError",
    "RunConfig",
    "assemble_drift",
    "build_region_graph",
    "evaluate",
    "exchange_matrix",
    "min_variance",
    "noise_spectrum",
    "parse_config",
    "shear_covariance",
    "simulate_langevin",
    "spin_noise_psd",
    "steady_state",
    "to_decibel",
    "transit_time",
]
