from fsilab.engine.attractor import dissipativity_probe, separation_probe, stationary_solve
from fsilab.engine.coupling import CoupledModel, CoupledState, Forcing, advance, make_initial_state, run
from fsilab.engine.diagnostics import (
    EnergyLedger,
    ball_identity_audit,
    decay_fit,
    energy_balance_audit,
    energy_total,
    higher_energy,
    higher_energy_audit,
    lyapunov,
)
from fsilab.engine.grid import BoxGeometry, build_grids
from fsilab.engine.params import ModelParams
from fsilab.engine.suites import run_suite

__all__ = [
    "BoxGeometry",
    "CoupledModel",
    "CoupledState",
    "EnergyLedger",
    "Forcing",
    "ModelParams",
    "advance",
    "ball_identity_audit",
    "build_grids",
    "decay_fit",
    "dissipativity_probe",
    "energy_balance_audit",
    "energy_total",
    "higher_energy",
    "higher_energy_audit",
    "lyapunov",
    "make_initial_state",
    "run",
    "run_suite",
    "separation_probe",
    "stationary_solve",
]
