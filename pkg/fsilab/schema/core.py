from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from fsilab.constants import EnergyQuadrature, SolverKind, TractionStencil, VolumeProjection
from fsilab.schema.common import PlateLoadSpec, PlateVectorSpec, Profile, zero_profile

class GeometryDef(BaseModel):
    lx: float = Field(1.0, gt=0)
    ly: float = Field(1.0, gt=0)
    depth: float = Field(1.0, gt=0)
    nx: int = Field(8, ge=4)
    ny: int = Field(8, ge=4)
    nz: int = Field(4, ge=4)

class PhysicsDef(BaseModel):
    nu: float = Field(gt=0)
    mu: float = Field(0.3, gt=0, lt=0.5)
    nonlinear: bool = True

class ForcingDef(BaseModel):
    fluid: Profile = Field(default_factory=zero_profile)
    plate: PlateLoadSpec = Field(default_factory=PlateLoadSpec)

class NumericsDef(BaseModel):
    dt: float = Field(gt=0)
    t_end: float = Field(gt=0)
    tol_couple: float = Field(1e-8, gt=0)
    tol_linear: float = Field(1e-10, gt=0)
    picard_tol: float = Field(1e-9, gt=0)
    picard_max: int = Field(50, ge=1)
    coupling_max: int = Field(100, ge=1)
    solver: SolverKind = SolverKind.AUTO
    volume_projection: VolumeProjection = VolumeProjection.ENERGY
    energy_quadrature: EnergyQuadrature = EnergyQuadrature.IMPLICIT
    traction_stencil: TractionStencil = TractionStencil.CONSISTENT

    @model_validator(mode='after')
    def check_horizon(self) -> 'NumericsDef':
        if self.t_end < self.dt:
            raise ValueError(f"t_end={self.t_end} is shorter than one step dt={self.dt}.")
        return self

class DiagnosticsDef(BaseModel):
    eta: Optional[float] = Field(None, gt=0)
    omega: List[float] = Field(default_factory=lambda: [0.1, 0.5])
    c_bar: Optional[float] = None
    snapshot_stride: int = Field(1, ge=1)
    R0: Optional[float] = Field(None, gt=0)
    c_probe: float = Field(1.0, ge=0)
    load_threshold: float = Field(0.01, gt=0)
    output_dir: Path = Path("runs")

    @model_validator(mode='after')
    def check_omega(self) -> 'DiagnosticsDef':
        if not self.omega or any(w <= 0 for w in self.omega):
            raise ValueError("omega must list at least one positive value.")
        return self

class InitialDef(BaseModel):
    fluid: Optional[Profile] = None
    displacement: Optional[PlateVectorSpec] = None
    velocity: Optional[PlateVectorSpec] = None
    snapshot: Optional[Path] = None

    @model_validator(mode='after')
    def check_source(self) -> 'InitialDef':
        profiles = (self.fluid, self.displacement, self.velocity)
        if self.snapshot is not None and any(p is not None for p in profiles):
            raise ValueError("Initial data come either from 'snapshot' or from profiles, not both.")
        return self

class VerifyDef(BaseModel):
    resolutions: List[int] = Field(default_factory=lambda: [16, 32, 64])
    steps: int = Field(200, ge=10)
    samples: int = Field(100, ge=1)
    seed: int = 0

    @model_validator(mode='after')
    def check_resolutions(self) -> 'VerifyDef':
        if len(self.resolutions) < 2 or any(r < 4 for r in self.resolutions):
            raise ValueError("resolutions needs at least two levels of 4 cells or more.")
        if sorted(self.resolutions) != self.resolutions:
            raise ValueError("resolutions must be increasing.")
        return self

class ProbeDef(BaseModel):
    amplitudes: List[float] = Field(default_factory=lambda: [0.01, 1.0])
    amplitude_b: float = 0.5

class RunConfig(BaseModel):
    geometry: GeometryDef = Field(default_factory=GeometryDef)
    physics: PhysicsDef
    forcing: ForcingDef = Field(default_factory=ForcingDef)
    numerics: NumericsDef
    diagnostics: DiagnosticsDef = Field(default_factory=DiagnosticsDef)
    initial: InitialDef = Field(default_factory=InitialDef)
    verify: VerifyDef = Field(default_factory=VerifyDef)
    probe: ProbeDef = Field(default_factory=ProbeDef)
