"""Verification batteries: manufactured-solution convergence, operator checks and audit refinement studies."""
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Sequence

import numpy as np

from fsilab.constants import Suite, TractionStencil
from fsilab.engine.coupling import CoupledModel, CoupledState, Forcing, run
from fsilab.engine.diagnostics import (
    ENVELOPE_SLACK, ball_identity_audit, energy_balance_audit, energy_total, higher_energy_audit, lyapunov_envelope,
    lyapunov_rate_audit, lyapunov_series, trajectory_terms,
)
from fsilab.engine.grid import build_grids
from fsilab.engine.manufactured import plate_solution, stokes_solution
from fsilab.engine.params import ModelParams
from fsilab.engine.plate import (
    PlateField, PlateWorkspace, SymTensorField2D, coercivity_probe, plate_energy, project_mean_zero,
    static_plate_solve, stress_C, vonkarman_forces,
)
from fsilab.engine.stokes import (
    StokesWorkspace, divergence_max, lifting_N0, momentum_residual, solve_stokes, traction_Tf,
)
from fsilab.exceptions import DiagnosticsError, RegistryError

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

@dataclass
class SuiteResult:
    suite: str
    checks: List[Check] = field(default_factory=list)
    data: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, value: float, threshold: float, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, float(value), float(threshold), bool(passed), detail))
        logger.info("[%s] %s = %.4g (threshold %.4g): %s", self.suite, name, value, threshold, "pass" if passed else "FAIL")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "data": self.data,
        }

@dataclass
class SuiteContext:
    """What a battery needs from a run configuration."""
    params: ModelParams
    resolutions: Sequence[int] = (16, 32, 64)
    steps: int = 200
    samples: int = 100
    seed: int = 0
    forcing: Callable[[CoupledModel], Forcing] = Forcing.zeros
    initial: Callable[[CoupledModel], CoupledState] = CoupledModel.zero_state

SuiteHandler = Callable[[SuiteContext], SuiteResult]

SUITE_REGISTRY: Dict[str, SuiteHandler] = {}

def register_suite(name: str) -> Callable[[SuiteHandler], SuiteHandler]:
    """Decorator to register a verification battery."""
    def decorator(func: SuiteHandler) -> SuiteHandler:
        SUITE_REGISTRY[name] = func
        return func
    return decorator

def observed_orders(sizes: Sequence[int], errors: Sequence[float]) -> List[float]:
    """log(e_k / e_{k+1}) / log(n_{k+1} / n_k) for consecutive refinement levels."""
    return [
        float(np.log(errors[k] / errors[k + 1]) / np.log(sizes[k + 1] / sizes[k]))
        for k in range(len(errors) - 1)
    ]


# -- stokes --------------------------------------------------------------------

@register_suite(Suite.STOKES)
def _stokes_suite(ctx: SuiteContext) -> SuiteResult:
    p = ctx.params
    geo = p.geometry
    exact = stokes_solution(geo.lx, geo.ly, geo.depth, p.nu)
    result = SuiteResult(Suite.STOKES.value)
    errors, pressure_errors, traction_errors, divergences = [], [], [], []
    for n in ctx.resolutions:
        fg, pg = build_grids(geo.model_copy(update={"nx": n, "ny": n, "nz": n}))
        ws = StokesWorkspace(fg, p.nu, dt=None, solver=p.solver, tol=p.tol_linear)
        psi = exact.top_velocity(pg)
        forcing = exact.sample_forcing(fg)
        vf = solve_stokes(forcing, psi, ws)
        reference = fg.extend(*exact.sample_velocity(fg), psi)[fg.interior_index]
        diff = vf.interior(fg) - reference
        errors.append(float(np.sqrt(fg.cell_volume * diff @ diff)))
        pressure_errors.append(float(np.sqrt(fg.cell_volume * np.sum((vf.p - exact.sample_pressure(fg)) ** 2))))
        traction = traction_Tf(vf, ws, TractionStencil.ONE_SIDED)
        traction_errors.append(float(np.max(np.abs((traction - exact.top_traction(pg))[:, 1:-1, 1:-1]))))
        divergences.append(divergence_max(vf, fg))
        if n == ctx.resolutions[-1]:
            result.data["momentum_residual"] = momentum_residual(vf, forcing, p.nu, fg)

    orders = observed_orders(ctx.resolutions, errors)
    result.data.update({
        "resolutions": list(ctx.resolutions),
        "velocity_l2_errors": errors,
        "pressure_l2_errors": pressure_errors,
        "traction_max_errors": traction_errors,
        "velocity_orders": orders,
        "pressure_orders": observed_orders(ctx.resolutions, pressure_errors),
        "traction_orders": observed_orders(ctx.resolutions, traction_errors),
    })
    result.check("velocity_order", orders[-1], 1.8, orders[-1] >= 1.8)
    result.check("max_divergence", max(divergences), 1e-10, max(divergences) <= 1e-10)

    # lifting linearity on the coarsest grid
    fg, pg = build_grids(geo.model_copy(update={"nx": ctx.resolutions[0], "ny": ctx.resolutions[0], "nz": ctx.resolutions[0]}))
    ws = StokesWorkspace(fg, p.nu, dt=None, solver=p.solver, tol=p.tol_linear)
    rng = np.random.default_rng(ctx.seed)
    psi_a = exact.top_velocity(pg)
    psi_b = np.stack([pg.scatter(rng.standard_normal(pg.n_interior)) for _ in range(3)])
    psi_b[2] = project_mean_zero(psi_b[2], pg)
    a, b = rng.uniform(-2, 2, size=2)
    combined = lifting_N0(a * psi_a + b * psi_b, ws).interior(fg)
    separate = a * lifting_N0(psi_a, ws).interior(fg) + b * lifting_N0(psi_b, ws).interior(fg)
    linearity = float(np.max(np.abs(combined - separate)))
    result.check("lifting_linearity", linearity, 1e-8, linearity <= 1e-8)
    return result


# -- plate ---------------------------------------------------------------------

def plate_gradient_mismatch(u: PlateField, direction: np.ndarray, mu: float, grid, step: float = 1e-5) -> float:
    """Relative gap between a central difference of plate_energy and the discrete force pairing."""
    def shifted(sign: float) -> PlateField:
        d = u.displacement + sign * step * direction
        return PlateField.from_vectors(d, u.velocity)

    numeric = (plate_energy(shifted(1.0), mu, grid) - plate_energy(shifted(-1.0), mu, grid)) / (2 * step)
    transversal, in_plane = vonkarman_forces(u, mu, grid)
    bending = (grid.bending_stiffness @ grid.interior(u.w)) / grid.node_area
    force = np.stack([-in_plane[0], -in_plane[1], grid.scatter(bending) - transversal])
    analytic = grid.node_area * float(np.sum(force * direction))
    return abs(numeric - analytic) / max(abs(analytic), 1e-12)

def _random_plate(rng: np.random.Generator, grid, scale: float) -> PlateField:
    stack = np.stack([grid.scatter(scale * rng.standard_normal(grid.n_interior)) for _ in range(3)])
    return PlateField.from_vectors(stack, np.zeros_like(stack))

@register_suite(Suite.PLATE)
def _plate_suite(ctx: SuiteContext) -> SuiteResult:
    p = ctx.params
    geo = p.geometry
    exact = plate_solution(geo.lx, geo.ly, p.mu)
    result = SuiteResult(Suite.PLATE.value)
    rng = np.random.default_rng(ctx.seed)

    errors = []
    for n in ctx.resolutions:
        _, pg = build_grids(geo.model_copy(update={"nx": n, "ny": n}))
        ws = PlateWorkspace(pg, p.mu, dt=None, nonlinear=False)
        solved = static_plate_solve(exact.sample_load(pg), ws, hold_volume=False)
        errors.append(float(np.max(np.abs(solved.displacement - exact.sample_displacement(pg)))))
    orders = observed_orders(ctx.resolutions, errors)
    result.data.update({"resolutions": list(ctx.resolutions), "static_max_errors": errors, "static_orders": orders})
    result.check("static_order", orders[-1], 1.8, orders[-1] >= 1.8)

    _, pg = build_grids(geo)
    mismatches = []
    for _ in range(ctx.samples):
        u = _random_plate(rng, pg, 0.1)
        direction = _random_plate(rng, pg, 1.0).displacement
        mismatches.append(plate_gradient_mismatch(u, direction, p.mu, pg))
    worst = max(mismatches)
    result.check("energy_gradient_mismatch", worst, 1e-6, worst <= 1e-6)

    tensors = SymTensorField2D(*rng.standard_normal((3, 10 * ctx.samples)))
    positivity = float(np.min(stress_C(tensors, p.mu).dot(tensors) / tensors.dot(tensors)))
    result.check("stress_positivity", positivity, 0.0, positivity > 0)

    ratios = []
    for _ in range(ctx.samples):
        u = _random_plate(rng, pg, 0.05)
        terms = coercivity_probe(u, np.zeros((3,) + pg.shape), p.mu, pg)
        ratios.append(terms.ratio)
    result.data["coercivity_ratio_max"] = float(np.max(ratios))
    result.data["coercivity_ratio_median"] = float(np.median(ratios))
    result.check("coercivity_ratio", float(np.max(ratios)), np.inf, bool(np.all(np.isfinite(ratios))))
    return result


# -- energy and ball -------------------------------------------------------------

def _refined_runs(ctx: SuiteContext, stride: int = 1) -> List[tuple]:
    """(model, forcing, trajectory) for `steps` steps at dt and 2*steps at dt/2 over the same horizon."""
    out = []
    for factor in (1, 2):
        model = CoupledModel(ctx.params.model_copy(update={"dt": ctx.params.dt / factor}))
        forcing = ctx.forcing(model)
        trajectory = run(ctx.initial(model), model, forcing, ctx.steps * ctx.params.dt, snapshot_stride=stride * factor)
        out.append((model, forcing, trajectory))
    return out

def _ratio(coarse: float, fine: float) -> float:
    return coarse / fine if fine > 0 else float("inf")

@register_suite(Suite.ENERGY)
def _energy_suite(ctx: SuiteContext) -> SuiteResult:
    result = SuiteResult(Suite.ENERGY.value)
    maxima, higher, drift = [], [], []
    for model, forcing, trajectory in _refined_runs(ctx):
        maxima.append(energy_balance_audit(trajectory, model, forcing).max_abs)
        higher.append(higher_energy_audit(trajectory, model).max_abs)
        mean_w = np.array([model.plate_grid.mean(s.plate.w) for s in trajectory.states])
        drift.append(float(np.max(np.abs(mean_w - mean_w[0]))))
    ratio = _ratio(*maxima)
    result.data.update({"balance_max": maxima, "higher_energy_max": higher, "mean_w_drift": drift})
    result.check("balance_refinement_ratio", ratio, 2.0, 1.6 <= ratio <= 2.4)
    result.check("higher_energy_refinement_ratio", _ratio(*higher), 1.5, _ratio(*higher) >= 1.5)
    area = ctx.params.geometry.area
    result.check("volume_drift", max(drift), 1e-10 * area, max(drift) <= 1e-10 * area)

    unloaded = replace(ctx, forcing=Forcing.zeros, steps=max(10, ctx.steps // 4))
    model, forcing, trajectory = _refined_runs(unloaded)[0]
    audit = energy_balance_audit(trajectory, model, forcing)
    totals = np.array([energy_total(s, model).E_total for s in trajectory.states])
    # interface sub-iteration stops at tol_couple, so exact signs hold only up to that level
    slack = max(ctx.params.tol_couple, 1e-12) * max(totals[0], 1e-300)
    result.check("unloaded_residual_min", audit.min, -slack, audit.min >= -slack)
    increase = float(np.max(np.diff(totals), initial=0.0))
    result.check("unloaded_energy_increase", increase, slack, increase <= slack)
    return result

@register_suite(Suite.BALL)
def _ball_suite(ctx: SuiteContext) -> SuiteResult:
    result = SuiteResult(Suite.BALL.value)
    runs = _refined_runs(ctx, stride=ctx.params.snapshot_stride)
    terms = [trajectory_terms(trajectory, model) for model, _, trajectory in runs]
    for omega in ctx.params.omega:
        ball, rate = [], []
        for (model, _, trajectory), t in zip(runs, terms):
            ball.append(ball_identity_audit(trajectory, model, omega, terms=t).max_residual)
            rate.append(float(np.max(np.abs(lyapunov_rate_audit(trajectory, model, omega, terms=t).residual))))
        result.data[f"omega={omega:g}"] = {"ball_max": ball, "rate_max": rate}
        shrink = _ratio(*ball)
        result.check(f"ball_refinement_ratio(omega={omega:g})", shrink, 1.6, shrink >= 1.6)

    model, _, trajectory = runs[1]
    reports = lyapunov_series(trajectory, model, terms=terms[1])
    try:
        envelope = lyapunov_envelope(trajectory.times, reports)
    except DiagnosticsError as e:
        result.check("lyapunov_rate", float("nan"), 0.0, False, detail=str(e))
        return result
    result.data["envelope"] = asdict(envelope)
    result.check("lyapunov_equivalence", envelope.lower_ratio, 0.0, envelope.equivalent)
    result.check("lyapunov_rate", envelope.rate, 0.0, envelope.rate > 0)
    result.check("lyapunov_envelope_excess", envelope.envelope_excess, ENVELOPE_SLACK, envelope.bounded)
    return result


def run_suite(name: str, ctx: SuiteContext) -> SuiteResult:
    """Runs a registered battery.

    Raises:
        RegistryError: If the suite name is unknown.
    """
    handler = SUITE_REGISTRY.get(name)
    if handler is None:
        raise RegistryError(f"Unknown verification suite '{name}'. Known: {sorted(s.value for s in SUITE_REGISTRY)}.")
    logger.info("Running suite '%s'.", name)
    return handler(ctx)
