"""Long-time experiments: stationary states, absorbing balls and trajectory separation."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from fsilab.engine.coupling import CoupledModel, CoupledState, Forcing, advance, run
from fsilab.engine.diagnostics import EnergyLedger, decay_fit, energy_total
from fsilab.engine.grid import fluid_norms, plate_norms
from fsilab.engine.params import ModelParams
from fsilab.engine.plate import PlateField, static_plate_solve, vonkarman_forces
from fsilab.engine.stokes import FluidField, divergence_max, solve_stokes, traction_Tf
from fsilab.exceptions import DiagnosticsError

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class StationaryState:
    fluid: FluidField
    plate: PlateField
    plate_residual: float
    fluid_divergence: float
    pressure_multiplier: float
    energy: float

    def as_state(self) -> CoupledState:
        return CoupledState(fluid=self.fluid, plate=self.plate, time=0.0)

@dataclass
class ProbeReport:
    kind: str
    R0: float = float("nan")
    labels: List[str] = field(default_factory=list)
    entry_times: List[Optional[float]] = field(default_factory=list)
    sup_energies: List[float] = field(default_factory=list)
    left_ball: List[bool] = field(default_factory=list)
    decay_rates: List[float] = field(default_factory=list)
    initial_energies: List[float] = field(default_factory=list)
    final_energies: List[float] = field(default_factory=list)
    times: List[float] = field(default_factory=list)
    distances: List[float] = field(default_factory=list)
    reference_distances: Dict[str, List[float]] = field(default_factory=dict)
    contraction_rate: float = float("nan")
    stationary_residual: float = float("nan")
    stationary_tolerance: float = 1e-9
    fixed_point_shift: float = float("nan")
    fixed_point_tolerance: float = float("inf")
    unloaded: bool = False
    decay_tolerance: float = 1e-6
    rate_tolerance: float = 0.2

    @property
    def decays(self) -> bool:
        """Final energies below decay_tolerance * max E(0), with positive decay rates that agree to rate_tolerance."""
        rates = [r for r, e0 in zip(self.decay_rates, self.initial_energies) if e0 > 0]
        if not all(np.isfinite(r) and r > 0 for r in rates):
            return False
        if rates and max(rates) - min(rates) > self.rate_tolerance * max(rates):
            return False
        floor = self.decay_tolerance * max(self.initial_energies, default=0.0)
        return all(e <= floor for e in self.final_energies)

    @property
    def passed(self) -> bool:
        if self.kind == "dissipativity":
            inside = all(t is not None for t in self.entry_times) and not any(self.left_ball)
            return inside and (not self.unloaded or self.decays)
        if self.kind == "stationary":
            return bool(
                self.stationary_residual <= self.stationary_tolerance
                and self.fixed_point_shift <= self.fixed_point_tolerance
            )
        return all(np.isfinite(self.distances))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        if self.kind == "dissipativity":
            out["decays"] = self.decays
        return out


def _plate_load(forcing: Forcing, traction: np.ndarray) -> np.ndarray:
    return forcing.plate - traction

def stationary_residual(plate: PlateField, load: np.ndarray, multiplier: float, model: CoupledModel) -> float:
    """Max-norm residual of the static clamped plate equations at interior nodes."""
    g = model.plate_grid
    area = g.node_area
    w_force = g.bending_stiffness @ g.interior(plate.w) / area
    u_stack = np.concatenate([g.interior(plate.u1), g.interior(plate.u2)])
    u_force = model.static_plate.membrane_stiffness @ u_stack / area
    if model.params.nonlinear:
        transversal, in_plane = vonkarman_forces(plate, model.params.mu, g)
    else:
        transversal, in_plane = np.zeros(g.shape), np.zeros((2,) + g.shape)
    r_w = w_force - g.interior(transversal) - g.interior(load[2]) - multiplier
    r_u = u_force - np.concatenate([g.interior(in_plane[0] + load[0]), g.interior(in_plane[1] + load[1])])
    return float(max(np.max(np.abs(r_w), initial=0.0), np.max(np.abs(r_u), initial=0.0)))

def stationary_solve(forcing: Forcing, model: CoupledModel) -> StationaryState:
    """Equilibrium with zero velocities: steady Stokes with v = 0 on top, then the static plate under G - T.

    Raises:
        PicardDivergenceError: If the static plate iteration fails (load too large for this regime).
    """
    params = model.params
    g = model.plate_grid
    in_plane_load = float(np.max(np.abs(forcing.plate[:2]), initial=0.0))
    if in_plane_load > params.load_threshold:
        logger.warning(
            "In-plane load %.3e exceeds load_threshold %.3e; the stationary problem may have several solutions.",
            in_plane_load, params.load_threshold,
        )
    fluid = solve_stokes(forcing.fluid, np.zeros((3,) + g.shape), model.steady_stokes)
    traction = traction_Tf(fluid, model.steady_stokes, params.traction_stencil)
    load = _plate_load(forcing, traction)
    plate = static_plate_solve(load, model.static_plate, hold_volume=True)
    multiplier = model.static_plate.last_residuals.get("volume_multiplier", 0.0)
    residual = stationary_residual(plate, load, multiplier, model)
    state = CoupledState(fluid=fluid, plate=plate, time=0.0)
    logger.info("Stationary state: plate residual %.3e, max|w| %.3e.", residual, float(np.max(np.abs(plate.w))))
    return StationaryState(
        fluid=fluid,
        plate=plate,
        plate_residual=residual,
        fluid_divergence=divergence_max(fluid, model.fluid_grid),
        pressure_multiplier=multiplier,
        energy=energy_total(state, model).E_total,
    )


def stationary_probe(forcing: Forcing, model: CoupledModel) -> ProbeReport:
    """Solves for the stationary state and measures how far one coupled step moves it."""
    stationary = stationary_solve(forcing, model)
    state = stationary.as_state()
    moved, _ = advance(state, model, forcing)
    load_scale = max(1.0, float(np.max(np.abs(forcing.plate))))
    report = ProbeReport(
        kind="stationary",
        stationary_residual=stationary.plate_residual,
        stationary_tolerance=1e-9 * load_scale,
        fixed_point_shift=phase_distance(moved, state, model),
        fixed_point_tolerance=10 * model.params.tol_couple,
    )
    report.initial_energies.append(stationary.energy)
    return report

def phase_distance(a: CoupledState, b: CoupledState, model: CoupledModel) -> float:
    """Discrete phase-space distance: fluid L2, plate H2 x H1 x H1 and plate velocity L2."""
    fa, fb = a.fluid, b.fluid
    fluid = FluidField(fa.v1 - fb.v1, fa.v2 - fb.v2, fa.v3 - fb.v3, fa.p - fb.p, fa.top - fb.top)
    pa, pb = a.plate, b.plate
    plate = PlateField(*(getattr(pa, n) - getattr(pb, n) for n in ("w", "u1", "u2", "wt", "u1t", "u2t")))
    pn = plate_norms(plate, model.plate_grid)
    total = fluid_norms(fluid, model.fluid_grid).l2**2 + pn.w.h2**2 + pn.u1.h1**2 + pn.u2.h1**2 + pn.velocity_l2**2
    return float(np.sqrt(total))

def _is_unloaded(forcing: Forcing) -> bool:
    fluid_zero = forcing.fluid is None or all(not np.any(c) for c in forcing.fluid)
    return fluid_zero and not np.any(forcing.plate)

def _energy_run(state0: CoupledState, params: ModelParams, forcing: Forcing, t_end: float):
    model = CoupledModel(params)
    ledger = EnergyLedger(model, forcing)
    trajectory = run(state0, model, forcing, t_end, observers=[ledger])
    return ledger.reports, trajectory

def dissipativity_probe(
    initial_states: Sequence[CoupledState],
    params: ModelParams,
    forcing: Forcing,
    t_end: float,
    labels: Optional[Sequence[str]] = None,
    max_workers: Optional[int] = None,
    decay_tolerance: float = 1e-6,
    rate_tolerance: float = 0.2,
) -> ProbeReport:
    """Runs every initial state and records entry into, and stays inside, the ball {E <= R0}.

    R0 is `params.R0` or 2 E(stationary) + c_probe. Without loads the report also requires every
    energy to fall below `decay_tolerance` times the largest initial energy, and the fitted decay
    rates to agree within `rate_tolerance`.

    Raises:
        DiagnosticsError: With fewer than two initial states.
        SimulationError: Propagated from any trajectory.
    """
    if len(initial_states) < 2:
        raise DiagnosticsError("dissipativity_probe needs at least two initial states.")
    labels = list(labels) if labels is not None else [f"state_{i}" for i in range(len(initial_states))]
    model = CoupledModel(params)
    if params.R0 is not None:
        radius = params.R0
    else:
        radius = 2 * stationary_solve(forcing, model).energy + params.c_probe
    unloaded = _is_unloaded(forcing)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(_energy_run, s, params, forcing, t_end) for s in initial_states]
        results = [f.result() for f in futures]

    report = ProbeReport(
        kind="dissipativity",
        R0=radius,
        labels=labels,
        unloaded=unloaded,
        decay_tolerance=decay_tolerance,
        rate_tolerance=rate_tolerance,
    )
    for label, (reports, _) in zip(labels, results):
        times = np.array([r.t for r in reports])
        energies = np.array([r.E_total for r in reports])
        inside = np.flatnonzero(energies <= radius)
        entry = int(inside[0]) if inside.size else None
        report.entry_times.append(float(times[entry]) if entry is not None else None)
        after = energies[entry:] if entry is not None else energies
        report.sup_energies.append(float(np.max(after)))
        report.left_ball.append(bool(entry is not None and np.any(after > radius)))
        report.initial_energies.append(float(energies[0]))
        report.final_energies.append(float(energies[-1]))
        try:
            rate = decay_fit(times, energies, offset=0.0 if unloaded else None).rate
        except DiagnosticsError as e:
            logger.warning("No decay rate for %s: %s", label, e)
            rate = float("nan")
        report.decay_rates.append(rate)
        logger.info("%s: entry %s, sup energy %.3e, rate %.4g", label, report.entry_times[-1], report.sup_energies[-1], rate)
    return report

def separation_probe(
    stateA: CoupledState,
    stateB: CoupledState,
    params: ModelParams,
    forcing: Forcing,
    t_end: float,
    reference: Optional[CoupledState] = None,
) -> ProbeReport:
    """Distance series between two trajectories and, with `reference`, of each to that state."""
    with ThreadPoolExecutor(max_workers=2) as pool:
        futures = [pool.submit(_energy_run, s, params, forcing, t_end) for s in (stateA, stateB)]
        (_, traj_a), (_, traj_b) = (f.result() for f in futures)
    model = CoupledModel(params)
    report = ProbeReport(kind="separation", labels=["A", "B"])
    report.times = list(traj_a.times)
    report.distances = [phase_distance(a, b, model) for a, b in zip(traj_a.states, traj_b.states)]
    if reference is not None:
        report.reference_distances = {
            "A": [phase_distance(s, reference, model) for s in traj_a.states],
            "B": [phase_distance(s, reference, model) for s in traj_b.states],
        }
    d = np.array(report.distances)
    if d[0] > 0 and np.all(d > 0) and len(d) >= 10:
        report.contraction_rate = decay_fit(report.times, d, offset=0.0).rate
    logger.info("Separation: initial %.3e, final %.3e.", d[0], d[-1])
    return report
