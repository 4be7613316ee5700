"""Energy, higher-order energy, Lyapunov and exponential-identity diagnostics along trajectories."""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from fsilab.constants import EnergyQuadrature
from fsilab.engine.coupling import CoupledModel, CoupledState, Forcing, StepReport, Trajectory
from fsilab.engine.plate import (
    bending_pairing, membrane_pairing, outer_gradient, pairing, stress_C, strain_P, strain_rate_P,
)
from fsilab.engine.stokes import lifting_N0
from fsilab.exceptions import DiagnosticsError

logger = logging.getLogger(__name__)

ENVELOPE_SLACK = 1e-2

@dataclass(frozen=True)
class EnergyParts:
    t: float
    kinetic_fluid: float
    kinetic_plate: float
    bending: float
    membrane: float

    @property
    def E_total(self) -> float:
        return self.kinetic_fluid + self.kinetic_plate + self.bending + self.membrane

@dataclass(frozen=True)
class EnergyReport:
    t: float
    E_total: float
    kinetic_fluid: float
    kinetic_plate: float
    bending: float
    membrane: float
    dissipation_cum: float
    work_cum: float
    balance_residual: float
    mean_w: float
    interface_residual: float = 0.0
    subiterations: int = 0

@dataclass(frozen=True)
class TimeDerivedState:
    """Time derivatives at one snapshot: fluid velocity rates on the extended layout, plate rates as (3, ...) stacks."""
    v_tilde: np.ndarray
    v_tilde_t: np.ndarray
    u_tilde: np.ndarray
    u_tilde_t: np.ndarray

@dataclass(frozen=True)
class HigherOrderTerms:
    """Scalar pairings of one snapshot entering the higher-order energy, the Lyapunov function and L, K."""
    v_sq: float
    ut_sq: float
    bending: float
    strain_rate: float
    static_cross: float
    source: float
    dissipation: float
    u_ut: float
    v_n0u: float
    v_n0ut: float
    strain_v_n0u: float

    @property
    def E_tilde(self) -> float:
        return 0.5 * (self.v_sq + self.ut_sq + self.bending + self.strain_rate) + 0.5 * self.static_cross

@dataclass(frozen=True)
class LyapunovReport:
    t: float
    E_tilde: float
    cross_terms: float
    Lambda: float
    eta: float
    Cbar: float
    omega: float

@dataclass(frozen=True)
class BalanceAudit:
    times: np.ndarray
    residual: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def min(self) -> float:
        return float(np.min(self.residual))

@dataclass(frozen=True)
class BallAudit:
    omega: float
    times: np.ndarray
    residual: np.ndarray
    max_residual: float

@dataclass(frozen=True)
class DecayFit:
    rate: float
    offset: float

    def __iter__(self):
        return iter((self.rate, self.offset))

@dataclass(frozen=True)
class LyapunovEnvelope:
    """Equivalence ratios of Lambda - Cbar against E~, and the envelope Lambda(0) e^{-rt} + offset.

    `envelope_excess` is max(Lambda - envelope) relative to Lambda(0).
    """
    lower_ratio: float
    upper_ratio: float
    rate: float
    offset: float
    envelope_excess: float

    @property
    def equivalent(self) -> bool:
        return self.lower_ratio > 0 and np.isfinite(self.upper_ratio)

    @property
    def bounded(self) -> bool:
        return self.rate > 0 and self.envelope_excess <= ENVELOPE_SLACK


# -- instantaneous energy ------------------------------------------------------

def energy_total(state: CoupledState, model: CoupledModel) -> EnergyParts:
    fg, pg = model.fluid_grid, model.plate_grid
    x = state.fluid.interior(fg)
    plate = state.plate
    speed_sq = plate.wt**2 + plate.u1t**2 + plate.u2t**2
    return EnergyParts(
        t=state.time,
        kinetic_fluid=0.5 * fg.cell_volume * float(x @ x),
        kinetic_plate=0.5 * float(np.sum(pg.weights * speed_sq)),
        bending=0.5 * bending_pairing(plate.w, plate.w, pg),
        membrane=0.5 * membrane_pairing(plate, model.params.mu, pg),
    )

def dissipation_rate(state: CoupledState, model: CoupledModel) -> float:
    """nu E(v, v) with the symmetric-gradient form."""
    ext = state.fluid.extended(model.fluid_grid)
    return model.params.nu * float(ext @ (model.fluid_grid.strain_form @ ext))

def power_input(state: CoupledState, forcing: Forcing, model: CoupledModel) -> float:
    """(G_fl, v) + (G_pl, u_t)."""
    fg, pg = model.fluid_grid, model.plate_grid
    total = float(np.sum(pg.weights * np.sum(forcing.plate * state.plate.velocity, axis=0)))
    if forcing.fluid is not None:
        zero_top = np.zeros((3,) + pg.shape)
        g = fg.extend(*forcing.fluid, zero_top)[fg.interior_index]
        total += fg.cell_volume * float(g @ state.fluid.interior(fg))
    return total


class EnergyLedger:
    """Observer accumulating dissipation and work integrals into EnergyReports.

    `implicit` quadrature takes integrands at the right endpoint of each step, matching implicit
    Euler, so the balance residual is the scheme's own numerical dissipation.
    """
    def __init__(
        self,
        model: CoupledModel,
        forcing: Forcing,
        quadrature: Optional[EnergyQuadrature] = None,
        spacing: Optional[float] = None,
    ):
        self.model = model
        self.forcing = forcing
        self.quadrature = EnergyQuadrature(quadrature or model.params.energy_quadrature)
        self.spacing = spacing or model.dt
        self.reports: List[EnergyReport] = []
        self._initial: Optional[float] = None
        self._last_rates = (0.0, 0.0)
        self._dissipation = 0.0
        self._work = 0.0

    def __call__(self, state: CoupledState, report: Optional[StepReport]) -> None:
        parts = energy_total(state, self.model)
        rates = (dissipation_rate(state, self.model), power_input(state, self.forcing, self.model))
        if self._initial is None:
            self._initial = parts.E_total
        else:
            h = self.spacing
            if self.quadrature == EnergyQuadrature.IMPLICIT:
                self._dissipation += h * rates[0]
                self._work += h * rates[1]
            else:
                self._dissipation += 0.5 * h * (rates[0] + self._last_rates[0])
                self._work += 0.5 * h * (rates[1] + self._last_rates[1])
        self._last_rates = rates
        self.reports.append(EnergyReport(
            t=state.time,
            E_total=parts.E_total,
            kinetic_fluid=parts.kinetic_fluid,
            kinetic_plate=parts.kinetic_plate,
            bending=parts.bending,
            membrane=parts.membrane,
            dissipation_cum=self._dissipation,
            work_cum=self._work,
            balance_residual=self._initial + self._work - parts.E_total - self._dissipation,
            mean_w=self.model.plate_grid.mean(state.plate.w),
            interface_residual=report.interface_residual if report else 0.0,
            subiterations=report.subiterations if report else 0,
        ))

def energy_balance_audit(
    trajectory: Trajectory,
    model: CoupledModel,
    forcing: Forcing,
    quadrature: Optional[EnergyQuadrature] = None,
) -> BalanceAudit:
    """Residual E(0) + work - E(t) - dissipation along stored snapshots."""
    ledger = EnergyLedger(model, forcing, quadrature, spacing=trajectory.spacing)
    for state in trajectory.states:
        ledger(state, None)
    return BalanceAudit(
        times=np.array(trajectory.times),
        residual=np.array([r.balance_residual for r in ledger.reports]),
    )


# -- time-derived quantities -------------------------------------------------

def time_derivatives(trajectory: Trajectory, model: CoupledModel) -> List[TimeDerivedState]:
    """Centred differences on the snapshot grid, second-order one-sided at the ends."""
    if len(trajectory) < 3:
        raise DiagnosticsError(f"Time derivatives need at least 3 snapshots, got {len(trajectory)}.")
    h = trajectory.spacing
    fg = model.fluid_grid
    fluid = np.array([s.fluid.extended(fg) for s in trajectory.states])
    plate_rate = np.array([s.plate.velocity for s in trajectory.states])
    v_tilde = np.gradient(fluid, h, axis=0, edge_order=2)
    v_tilde_t = np.gradient(v_tilde, h, axis=0, edge_order=2)
    u_tilde_t = np.gradient(plate_rate, h, axis=0, edge_order=2)
    return [
        TimeDerivedState(v_tilde[k], v_tilde_t[k], plate_rate[k], u_tilde_t[k])
        for k in range(len(trajectory))
    ]

def higher_order_terms(state: CoupledState, tds: TimeDerivedState, model: CoupledModel) -> HigherOrderTerms:
    fg, pg = model.fluid_grid, model.plate_grid
    mu = model.params.mu
    strain = fg.strain_form
    vol = fg.cell_volume
    interior = fg.interior_index

    rate_strain = strain_rate_P(state.plate, tds.u_tilde, pg)
    rate_stress = stress_C(rate_strain, mu)
    w_outer = outer_gradient(tds.u_tilde[2], pg)
    n0u = lifting_N0(tds.u_tilde, model.steady_stokes).extended(fg)
    n0ut = lifting_N0(tds.u_tilde_t, model.steady_stokes).extended(fg)
    v = tds.v_tilde
    return HigherOrderTerms(
        v_sq=vol * float(v[interior] @ v[interior]),
        ut_sq=float(np.sum(pg.weights * np.sum(tds.u_tilde_t**2, axis=0))),
        bending=bending_pairing(tds.u_tilde[2], tds.u_tilde[2], pg),
        strain_rate=pairing(rate_stress, rate_strain, pg),
        static_cross=pairing(stress_C(strain_P(state.plate, pg), mu), w_outer, pg),
        source=pairing(rate_stress, w_outer, pg),
        dissipation=float(v @ (strain @ v)),
        u_ut=float(np.sum(pg.weights * np.sum(tds.u_tilde * tds.u_tilde_t, axis=0))),
        v_n0u=vol * float(v[interior] @ n0u[interior]),
        v_n0ut=vol * float(v[interior] @ n0ut[interior]),
        strain_v_n0u=float(v @ (strain @ n0u)),
    )

def trajectory_terms(trajectory: Trajectory, model: CoupledModel) -> List[HigherOrderTerms]:
    derived = time_derivatives(trajectory, model)
    return [higher_order_terms(s, d, model) for s, d in zip(trajectory.states, derived)]

def higher_energy(state: CoupledState, tds: TimeDerivedState, model: CoupledModel) -> float:
    return higher_order_terms(state, tds, model).E_tilde

def _trapezoid_cumulative(values: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    out[1:] = np.cumsum(0.5 * h * (values[1:] + values[:-1]))
    return out

def higher_energy_audit(
    trajectory: Trajectory,
    model: CoupledModel,
    terms: Optional[Sequence[HigherOrderTerms]] = None,
) -> BalanceAudit:
    """Residual of E~(t) + nu int E(v~,v~) - E~(0) - 3/2 int (C(P(u,u~)), grad w~ (x) grad w~)."""
    terms = terms if terms is not None else trajectory_terms(trajectory, model)
    h = trajectory.spacing
    e_tilde = np.array([t.E_tilde for t in terms])
    dissipation = model.params.nu * np.array([t.dissipation for t in terms])
    source = np.array([t.source for t in terms])
    residual = e_tilde + _trapezoid_cumulative(dissipation, h) - e_tilde[0] - 1.5 * _trapezoid_cumulative(source, h)
    return BalanceAudit(times=np.array(trajectory.times), residual=residual)


# -- Lyapunov function ---------------------------------------------------------

def cross_terms(terms: HigherOrderTerms, eta: float) -> float:
    return eta * (terms.u_ut + terms.v_n0u)

def choose_c_bar(first: HigherOrderTerms, model: CoupledModel) -> float:
    if model.params.c_bar is not None:
        return model.params.c_bar
    return max(0.0, -(first.E_tilde + cross_terms(first, model.params.eta_value))) + 1.0

def lyapunov(
    state: CoupledState,
    tds: TimeDerivedState,
    model: CoupledModel,
    c_bar: float,
    omega: Optional[float] = None,
) -> LyapunovReport:
    """Lambda = E~ + eta[(u~, u~_t) + (v~, N0 u~)] + Cbar."""
    terms = higher_order_terms(state, tds, model)
    return _lyapunov_report(state.time, terms, model, c_bar, omega)

def _lyapunov_report(t: float, terms: HigherOrderTerms, model: CoupledModel, c_bar: float, omega: Optional[float]) -> LyapunovReport:
    eta = model.params.eta_value
    cross = cross_terms(terms, eta)
    return LyapunovReport(
        t=t,
        E_tilde=terms.E_tilde,
        cross_terms=cross,
        Lambda=terms.E_tilde + cross + c_bar,
        eta=eta,
        Cbar=c_bar,
        omega=omega if omega is not None else model.params.omega[0],
    )

def lyapunov_series(trajectory: Trajectory, model: CoupledModel, terms: Optional[Sequence[HigherOrderTerms]] = None) -> List[LyapunovReport]:
    terms = terms if terms is not None else trajectory_terms(trajectory, model)
    c_bar = choose_c_bar(terms[0], model)
    return [_lyapunov_report(t, term, model, c_bar, None) for t, term in zip(trajectory.times, terms)]

def ball_functionals(terms: HigherOrderTerms, model: CoupledModel, omega: float) -> tuple:
    """Dissipation functional L and remainder K with d/dt(Lambda - Cbar) + 2 omega (Lambda - Cbar) = K - L."""
    eta, nu = model.params.eta_value, model.params.nu
    elastic = terms.bending + terms.strain_rate + terms.static_cross
    dissipative = (eta - omega) * elastic - (eta + omega) * terms.ut_sq - omega * terms.v_sq + nu * terms.dissipation
    remainder = (
        eta * (terms.v_n0ut - nu * terms.strain_v_n0u)
        + 1.5 * terms.source
        + 2 * omega * eta * (terms.u_ut + terms.v_n0u)
    )
    return dissipative, remainder

def _shifted_lambda(terms: Sequence[HigherOrderTerms], model: CoupledModel) -> np.ndarray:
    eta = model.params.eta_value
    return np.array([t.E_tilde + cross_terms(t, eta) for t in terms])

def ball_identity_audit(
    trajectory: Trajectory,
    model: CoupledModel,
    omega: float,
    terms: Optional[Sequence[HigherOrderTerms]] = None,
    n_starts: int = 20,
) -> BallAudit:
    """Residual of the exponentially weighted identity for Lambda - Cbar.

    residual(t, s) = (Lambda-Cbar)(t) + int_s^t L e^{-2w(t-r)} dr - (Lambda-Cbar)(s) e^{-2w(t-s)}
    - int_s^t K e^{-2w(t-r)} dr, trapezoidal in r. The series is taken at s = 0; the maximum runs
    over all t and about `n_starts` evenly spaced s.
    """
    terms = terms if terms is not None else trajectory_terms(trajectory, model)
    times = np.array(trajectory.times)
    h = trajectory.spacing
    shifted = _shifted_lambda(terms, model)
    pairs = np.array([ball_functionals(t, model, omega) for t in terms])
    net = pairs[:, 0] - pairs[:, 1]

    def residual_from(i: int) -> np.ndarray:
        out = np.zeros(len(times) - i)
        for j in range(i, len(times)):
            weights = np.exp(-2 * omega * (times[j] - times[i:j + 1]))
            integral = np.trapezoid(net[i:j + 1] * weights, dx=h) if j > i else 0.0
            out[j - i] = shifted[j] + integral - shifted[i] * np.exp(-2 * omega * (times[j] - times[i]))
        return out

    series = residual_from(0)
    worst = float(np.max(np.abs(series)))
    for i in range(0, len(times) - 1, max(1, len(times) // n_starts)):
        worst = max(worst, float(np.max(np.abs(residual_from(i)))))
    return BallAudit(omega=omega, times=times, residual=series, max_residual=worst)

def lyapunov_rate_audit(
    trajectory: Trajectory,
    model: CoupledModel,
    omega: float,
    terms: Optional[Sequence[HigherOrderTerms]] = None,
) -> BalanceAudit:
    """Pointwise residual of d/dt(Lambda - Cbar) + 2 omega (Lambda - Cbar) - (K - L)."""
    terms = terms if terms is not None else trajectory_terms(trajectory, model)
    shifted = _shifted_lambda(terms, model)
    pairs = np.array([ball_functionals(t, model, omega) for t in terms])
    rate = np.gradient(shifted, trajectory.spacing, edge_order=2)
    residual = rate + 2 * omega * shifted - (pairs[:, 1] - pairs[:, 0])
    return BalanceAudit(times=np.array(trajectory.times), residual=residual)


# -- fits ----------------------------------------------------------------------

def decay_fit(times: Sequence[float], values: Sequence[float], offset: Optional[float] = None, tail: float = 0.5) -> DecayFit:
    """Exponential rate r of values ~ a e^{-r t} + offset.

    Without `offset` it is estimated by nonlinear least squares first. The rate is the slope of
    log(value - offset) against t on the last `tail` fraction of the series.

    Raises:
        DiagnosticsError: For fewer than 10 samples or a non-positive series after the offset.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 10 or t.size != y.size:
        raise DiagnosticsError(f"decay_fit needs at least 10 paired samples, got {t.size}.")
    if offset is None:
        spread = float(np.ptp(y))
        if spread <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
            return DecayFit(rate=0.0, offset=float(np.mean(y)))
        t0, span = t[0], t[-1] - t[0]

        def model(tt, a, r, c):
            return a * np.exp(-r * (tt - t0)) + c

        guess = (y[0] - y[-1], 1.0 / span, y[-1])
        try:
            params, _ = curve_fit(model, t, y, p0=guess, maxfev=20000)
        except RuntimeError as e:
            raise DiagnosticsError(f"Exponential fit did not converge: {e}")
        offset = float(params[2])
    start = int(np.floor((1.0 - tail) * t.size))
    shifted = y[start:] - offset
    if np.any(shifted <= 0):
        raise DiagnosticsError("Series is not positive after subtracting the offset.")
    slope = np.polyfit(t[start:], np.log(shifted), 1)[0]
    return DecayFit(rate=float(-slope), offset=float(offset))

def lyapunov_envelope(times: Sequence[float], reports: Sequence[LyapunovReport]) -> LyapunovEnvelope:
    """Empirical equivalence ratios of Lambda - Cbar against E~ and the decay envelope Lambda(0) e^{-rt} + Cbar.

    The rate is the tail decay rate of Lambda - Cbar; the whole series is then checked against the
    envelope it implies.

    Raises:
        DiagnosticsError: For fewer than 10 reports or a tail where Lambda - Cbar is not positive.
    """
    t = np.asarray(times, dtype=float)
    lam = np.array([r.Lambda for r in reports])
    c_bar = reports[0].Cbar
    shifted = lam - c_bar
    e_tilde = np.array([r.E_tilde for r in reports])
    mask = e_tilde > 1e-14 * max(float(np.max(e_tilde)), 1e-300)
    ratios = shifted[mask] / e_tilde[mask] if np.any(mask) else np.array([np.nan])
    fit = decay_fit(t, lam, offset=c_bar)
    envelope = lam[0] * np.exp(-fit.rate * (t - t[0])) + c_bar
    excess = float(np.max(lam - envelope)) / max(abs(float(lam[0])), 1e-300)
    return LyapunovEnvelope(
        lower_ratio=float(np.min(ratios)),
        upper_ratio=float(np.max(ratios)),
        rate=fit.rate,
        offset=c_bar,
        envelope_excess=excess,
    )
