"""Strongly coupled partitioned stepper for the fluid/plate system."""
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from fsilab.constants import VolumeProjection
from fsilab.engine.grid import Velocity, build_grids
from fsilab.engine.params import ModelParams
from fsilab.engine.plate import PlateField, PlateWorkspace, plate_substep, project_mean_zero
from fsilab.engine.stokes import (
    FluidField, StokesWorkspace, fluid_substep, lifting_N0, project_divergence_free, traction_Tf,
)
from fsilab.exceptions import CompatibilityError, CouplingDivergenceError, FsiLabException, SimulationError

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class CoupledState:
    fluid: FluidField
    plate: PlateField
    time: float = 0.0

@dataclass(frozen=True)
class StepReport:
    subiterations: int
    interface_residual: float
    solver_residuals: Dict[str, float]
    residual_history: Tuple[float, ...] = ()

@dataclass(frozen=True)
class Forcing:
    """Fluid volume force on faces (None for zero) and plate load (3, nx+1, ny+1) ordered (G1, G2, G3)."""
    fluid: Optional[Velocity]
    plate: np.ndarray

    @classmethod
    def zeros(cls, model: "CoupledModel") -> "Forcing":
        return cls(fluid=None, plate=np.zeros((3,) + model.plate_grid.shape))

    def scaled(self, factor: float) -> "Forcing":
        fluid = None if self.fluid is None else tuple(factor * c for c in self.fluid)
        return Forcing(fluid=fluid, plate=factor * self.plate)


class CoupledModel:
    """Grids and private solver workspaces for one parameter set.

    Workspaces are built lazily and are not thread-safe; concurrent trajectories each build
    their own model.
    """
    def __init__(self, params: ModelParams):
        self.params = params
        self.fluid_grid, self.plate_grid = build_grids(params.geometry)

    @property
    def dt(self) -> float:
        return self.params.dt

    @cached_property
    def stokes(self) -> StokesWorkspace:
        p = self.params
        return StokesWorkspace(self.fluid_grid, p.nu, dt=p.dt, solver=p.solver, tol=p.tol_linear)

    @cached_property
    def steady_stokes(self) -> StokesWorkspace:
        p = self.params
        return StokesWorkspace(self.fluid_grid, p.nu, dt=None, solver=p.solver, tol=p.tol_linear)

    def _plate_workspace(self, dt: Optional[float]) -> PlateWorkspace:
        p = self.params
        return PlateWorkspace(
            self.plate_grid, p.mu, dt=dt, nonlinear=p.nonlinear,
            picard_tol=p.picard_tol, picard_max=p.picard_max, relaxation=p.picard_relaxation,
        )

    @cached_property
    def plate(self) -> PlateWorkspace:
        return self._plate_workspace(self.params.dt)

    @cached_property
    def static_plate(self) -> PlateWorkspace:
        return self._plate_workspace(None)

    def zero_state(self) -> CoupledState:
        return CoupledState(FluidField.zeros(self.fluid_grid), PlateField.zeros(self.plate_grid), 0.0)


def make_initial_state(
    v0: Optional[Velocity],
    u0: Optional[np.ndarray],
    u1: Optional[np.ndarray],
    model: CoupledModel,
) -> CoupledState:
    """Compatible initial state v0 = P(v0 - N0 u1) + N0 u1 with clamped plate data.

    Args:
        v0 (Optional[Velocity]): Fluid velocity on faces; its top-face values are discarded.
        u0 (Optional[np.ndarray]): Plate displacement stack (3, nx+1, ny+1) ordered (u1, u2, w).
        u1 (Optional[np.ndarray]): Plate velocity stack of the same layout.
        model (CoupledModel): Grids and workspaces.

    Raises:
        CompatibilityError: If plate data violate the clamped edge or the velocity w-component has nonzero mean.
    """
    fg, pg = model.fluid_grid, model.plate_grid
    shape = (3,) + pg.shape
    u0 = np.zeros(shape) if u0 is None else np.asarray(u0, dtype=float)
    u1 = np.zeros(shape) if u1 is None else np.asarray(u1, dtype=float)
    plate = PlateField.from_vectors(u0, u1)
    plate.check_clamped(pg)
    scale = max(1.0, float(np.max(np.abs(u1[2]))))
    if abs(pg.mean(u1[2])) > 1e-10 * scale:
        raise CompatibilityError(f"Initial w-velocity has mean {pg.mean(u1[2]):.3e}; it must be zero.")

    lift = lifting_N0(u1, model.steady_stokes)
    if v0 is None:
        zero_trace = tuple(np.zeros(s) for s in fg.face_shapes)
    else:
        # the projection drops top-face values, leaving v0 - N0 u1 in the zero-trace space
        zero_trace = project_divergence_free(v0[0] - lift.v1, v0[1] - lift.v2, v0[2] - lift.v3, model.steady_stokes)
    fluid = replace(
        lift,
        v1=zero_trace[0] + lift.v1,
        v2=zero_trace[1] + lift.v2,
        v3=zero_trace[2] + lift.v3,
    )
    return CoupledState(fluid=fluid, plate=plate, time=0.0)


def _project_volume_l2(plate: PlateField, old: PlateField, dt: float, model: CoupledModel) -> PlateField:
    wt = project_mean_zero(plate.wt, model.plate_grid)
    return replace(plate, wt=wt, w=old.w + dt * wt)

def advance(state: CoupledState, model: CoupledModel, forcing: Forcing) -> Tuple[CoupledState, StepReport]:
    """Advances the coupled system by one implicit Euler step.

    The interface velocity is iterated to a fixed point: the fluid step takes the current interface
    velocity as top-face data, its traction drives the plate step, and the plate velocity (with
    zero-mean w_t) updates the interface velocity with Aitken relaxation.

    Raises:
        CouplingDivergenceError: If the interface residual stays above tol_couple.
    """
    params = model.params
    dt = params.dt
    low, high = params.aitken_bounds
    hold_volume = params.volume_projection == VolumeProjection.ENERGY

    psi = state.plate.velocity
    relax = params.aitken_initial
    previous: Optional[np.ndarray] = None
    history: List[float] = []
    for iteration in range(1, params.coupling_max + 1):
        fluid = fluid_substep(state.fluid, psi, forcing.fluid, dt, model.stokes)
        traction = traction_Tf(fluid, model.stokes, params.traction_stencil)
        plate = plate_substep(state.plate, traction, forcing.plate, dt, model.plate, hold_volume=hold_volume)
        if not hold_volume:
            plate = _project_volume_l2(plate, state.plate, dt, model)
        residual = plate.velocity - psi
        history.append(float(np.max(np.abs(residual))))
        if history[-1] < params.tol_couple:
            break
        if previous is not None:
            delta = residual - previous
            denom = float(np.sum(delta * delta))
            if denom > 0:
                relax = float(np.clip(-relax * np.sum(previous * delta) / denom, low, high))
        psi = psi + relax * residual
        previous = residual
    else:
        raise CouplingDivergenceError(
            f"Interface iteration did not reach {params.tol_couple:.1e} in {params.coupling_max} sub-iterations "
            f"(last residual {history[-1]:.3e}).",
            history=history,
        )
    if iteration > 0.5 * params.coupling_max:
        logger.warning("Slow interface convergence at t=%.6g: %d sub-iterations.", state.time + dt, iteration)

    solver_residuals = {
        "fluid_divergence": model.stokes.last_residuals.get("divergence", 0.0),
        "fluid_multiplier": model.stokes.last_residuals.get("multiplier", 0.0),
        **model.plate.last_residuals,
    }
    report = StepReport(iteration, history[-1], solver_residuals, tuple(history))
    logger.debug("t=%.6g sub-iterations=%d residual=%.3e", state.time + dt, iteration, history[-1])
    return CoupledState(fluid=fluid, plate=plate, time=state.time + dt), report


Observer = Callable[[CoupledState, Optional[StepReport]], None]

@dataclass
class Trajectory:
    """Snapshots every `stride` steps (t=0 included), every step report, and the final state."""
    dt: float
    stride: int
    times: List[float] = field(default_factory=list)
    states: List[CoupledState] = field(default_factory=list)
    reports: List[StepReport] = field(default_factory=list)
    final_state: Optional[CoupledState] = None

    @property
    def spacing(self) -> float:
        return self.dt * self.stride

    def __len__(self) -> int:
        return len(self.states)

def run(
    state0: CoupledState,
    model: CoupledModel,
    forcing: Forcing,
    t_end: float,
    observers: Sequence[Observer] = (),
    snapshot_stride: Optional[int] = None,
) -> Trajectory:
    """Advances with fixed dt up to t_end, calling observers at t=0 and after every step.

    Raises:
        ValueError: If t_end is not positive.
        SimulationError: If a step fails; `last_state` holds the last accepted state.
    """
    if t_end <= 0:
        raise ValueError(f"t_end must be positive, got {t_end}.")
    dt = model.dt
    n_steps = max(1, int(round(t_end / dt)))
    if abs(n_steps * dt - t_end) > 1e-9 * t_end:
        logger.warning("t_end=%g is not a multiple of dt=%g; running %d steps.", t_end, dt, n_steps)
    stride = snapshot_stride or model.params.snapshot_stride

    trajectory = Trajectory(dt=dt, stride=stride)
    state = state0
    trajectory.times.append(state.time)
    trajectory.states.append(state)
    for observer in observers:
        observer(state, None)
    for step in range(1, n_steps + 1):
        try:
            state, report = advance(state, model, forcing)
        except FsiLabException as e:
            raise SimulationError(f"Step {step} from t={state.time:.6g} failed: {e}", last_state=state) from e
        trajectory.reports.append(report)
        for observer in observers:
            observer(state, report)
        if step % stride == 0:
            trajectory.times.append(state.time)
            trajectory.states.append(state)
    trajectory.final_state = state
    logger.info("Run finished: %d steps to t=%.6g.", n_steps, state.time)
    return trajectory
