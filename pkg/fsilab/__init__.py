from fsilab.core import Laboratory
from fsilab.config import Config
from fsilab.exceptions import (
    FsiLabException,
    ConfigError,
    GridError,
    CompatibilityError,
    SolverError,
    PicardDivergenceError,
    CouplingDivergenceError,
    SimulationError,
    DiagnosticsError,
    RegistryError,
    SnapshotError,
    OutputError,
)

__all__ = [
    "Laboratory",
    "Config",
    "FsiLabException",
    "ConfigError",
    "GridError",
    "CompatibilityError",
    "SolverError",
    "PicardDivergenceError",
    "CouplingDivergenceError",
    "SimulationError",
    "DiagnosticsError",
    "RegistryError",
    "SnapshotError",
    "OutputError",
]
