import hashlib
from typing import TYPE_CHECKING, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from fsilab.constants import EnergyQuadrature, SolverKind, TractionStencil, VolumeProjection
from fsilab.engine.grid import BoxGeometry

if TYPE_CHECKING:
    from fsilab.schema.core import RunConfig

class ModelParams(BaseModel):
    """Everything the numerical engine needs from a run configuration."""
    model_config = ConfigDict(frozen=True)

    geometry: BoxGeometry
    nu: float = Field(gt=0)
    mu: float = Field(0.3, gt=0, lt=0.5)
    nonlinear: bool = True

    dt: float = Field(gt=0)
    tol_couple: float = Field(1e-8, gt=0)
    tol_linear: float = Field(1e-10, gt=0)
    picard_tol: float = Field(1e-9, gt=0)
    picard_max: int = Field(50, ge=1)
    picard_relaxation: float = Field(1.0, gt=0, le=1)
    coupling_max: int = Field(100, ge=1)
    aitken_initial: float = Field(0.5, gt=0, le=1)
    aitken_bounds: Tuple[float, float] = (0.05, 1.0)
    solver: SolverKind = SolverKind.AUTO
    volume_projection: VolumeProjection = VolumeProjection.ENERGY
    energy_quadrature: EnergyQuadrature = EnergyQuadrature.IMPLICIT
    traction_stencil: TractionStencil = TractionStencil.CONSISTENT

    eta: Optional[float] = Field(None, gt=0)
    omega: Tuple[float, ...] = (0.1, 0.5)
    c_bar: Optional[float] = None
    snapshot_stride: int = Field(1, ge=1)
    load_threshold: float = Field(0.01, gt=0)
    c_probe: float = Field(1.0, ge=0)
    R0: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def check_lyapunov(self) -> "ModelParams":
        if not self.omega or any(w <= 0 for w in self.omega):
            raise ValueError("omega must list at least one positive value.")
        low, high = self.aitken_bounds
        if not 0 < low <= high <= 1:
            raise ValueError("aitken_bounds must satisfy 0 < low <= high <= 1.")
        return self

    @property
    def eta_value(self) -> float:
        return self.eta if self.eta is not None else 0.1 * min(self.nu, 1.0)

    def params_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()

    @classmethod
    def from_config(cls, config: "RunConfig") -> "ModelParams":
        num, diag = config.numerics, config.diagnostics
        return cls(
            geometry=BoxGeometry(**config.geometry.model_dump()),
            nu=config.physics.nu,
            mu=config.physics.mu,
            nonlinear=config.physics.nonlinear,
            dt=num.dt,
            tol_couple=num.tol_couple,
            tol_linear=num.tol_linear,
            picard_tol=num.picard_tol,
            picard_max=num.picard_max,
            coupling_max=num.coupling_max,
            solver=num.solver,
            volume_projection=num.volume_projection,
            energy_quadrature=num.energy_quadrature,
            traction_stencil=num.traction_stencil,
            eta=diag.eta,
            omega=tuple(diag.omega),
            c_bar=diag.c_bar,
            snapshot_stride=diag.snapshot_stride,
            load_threshold=diag.load_threshold,
            c_probe=diag.c_probe,
            R0=diag.R0,
        )
