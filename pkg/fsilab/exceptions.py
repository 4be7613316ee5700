class FsiLabException(Exception):
    """Base exception for all `fsilab` domain errors."""
    pass

class ConfigError(FsiLabException):
    """Raised when a run configuration is malformed or violates the schema."""
    pass

class GridError(FsiLabException):
    """Raised when fields and grids do not belong to the same geometry."""
    pass

class CompatibilityError(FsiLabException):
    """Raised when boundary or initial data violate volume compatibility or clamped conditions."""
    pass

class SolverError(FsiLabException):
    """Raised when a linear solve does not reach its tolerance."""
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual

class PicardDivergenceError(SolverError):
    """Raised when the lagged nonlinear plate iteration fails to converge."""
    pass

class CouplingDivergenceError(SolverError):
    """Raised when the fluid/plate interface sub-iteration fails to converge."""
    def __init__(self, message: str, history: list[float]):
        super().__init__(message, residual=history[-1] if history else float("nan"))
        self.history = history

class SimulationError(FsiLabException):
    """Raised when a run aborts; keeps the last state that was advanced successfully."""
    def __init__(self, message: str, last_state=None):
        super().__init__(message)
        self.last_state = last_state

class DiagnosticsError(FsiLabException):
    """Raised when a trajectory or series cannot support the requested diagnostic."""
    pass

class RegistryError(FsiLabException):
    """Raised when a suite, probe or profile name is not registered."""
    pass

class SnapshotError(FsiLabException):
    """Raised when a snapshot cannot be read or does not match the configured grid."""
    pass

class OutputError(FsiLabException):
    """Raised when a run artifact cannot be written."""
    pass
