from fsilab.schema.common import PlateLoadSpec, PlateVectorSpec, ProfileSpec
from fsilab.schema.core import (
    DiagnosticsDef, ForcingDef, GeometryDef, InitialDef, NumericsDef, PhysicsDef, ProbeDef, RunConfig, VerifyDef,
)

__all__ = [
    "DiagnosticsDef",
    "ForcingDef",
    "GeometryDef",
    "InitialDef",
    "NumericsDef",
    "PhysicsDef",
    "PlateLoadSpec",
    "PlateVectorSpec",
    "ProbeDef",
    "ProfileSpec",
    "RunConfig",
    "VerifyDef",
]
