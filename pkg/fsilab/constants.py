from enum import Enum

class Suite(str, Enum):
    STOKES = "stokes"
    PLATE = "plate"
    ENERGY = "energy"
    BALL = "ball"

class ProbeKind(str, Enum):
    STATIONARY = "stationary"
    DISSIPATIVITY = "dissipativity"
    SEPARATION = "separation"

class SolverKind(str, Enum):
    DIRECT = "direct"
    UZAWA = "uzawa"
    AUTO = "auto"

class VolumeProjection(str, Enum):
    ENERGY = "energy"
    L2 = "l2"

class EnergyQuadrature(str, Enum):
    IMPLICIT = "implicit"
    TRAPEZOID = "trapezoid"

class TractionStencil(str, Enum):
    CONSISTENT = "consistent"
    ONE_SIDED = "one_sided"

class ProfileName(str, Enum):
    ZERO = "zero"
    CONSTANT = "constant"
    BUMP = "bump"
    DIPOLE = "dipole"
    TILT = "tilt"
    SINE = "sine"
    VORTEX = "vortex"
    GRAVITY = "gravity"

# Unknown count above which `auto` hands the saddle-point system to Uzawa.
DIRECT_SOLVER_LIMIT = 60_000

SUMMARY_SCHEMA = "fsilab.summary/1"
PROBE_SCHEMA = "fsilab.probe/1"
VERIFY_SCHEMA = "fsilab.verify/1"
SNAPSHOT_FORMAT = "fsilab.snapshot/1"

DIAGNOSTIC_COLUMNS = (
    "t",
    "E_total",
    "kinetic_fluid",
    "kinetic_plate",
    "bending",
    "membrane",
    "dissipation_cum",
    "work_cum",
    "balance_residual",
    "E_tilde",
    "Lambda",
    "ball_residual",
    "mean_w",
    "interface_residual",
    "subiterations",
)
