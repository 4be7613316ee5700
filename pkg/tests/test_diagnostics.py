import numpy as np
import pytest

from fsilab.constants import EnergyQuadrature, ProfileName
from fsilab.engine.coupling import CoupledModel, Forcing, make_initial_state, run
from fsilab.engine.diagnostics import (
    EnergyLedger, LyapunovReport, ball_identity_audit, choose_c_bar, decay_fit, energy_balance_audit,
    higher_energy_audit, lyapunov_envelope, lyapunov_rate_audit, lyapunov_series, time_derivatives,
    trajectory_terms,
)
from fsilab.engine.grid import BoxGeometry
from fsilab.engine.params import ModelParams
from fsilab.engine.profiles import plate_profile
from fsilab.exceptions import DiagnosticsError
from fsilab.schema.common import ProfileSpec

def _model(**overrides):
    base = dict(geometry=BoxGeometry(lx=1.0, ly=1.0, depth=1.0, nx=8, ny=8, nz=4), nu=1.0, dt=0.02)
    base.update(overrides)
    return CoupledModel(ModelParams(**base))

def _bent(model, amplitude=0.05):
    u0 = np.zeros((3,) + model.plate_grid.shape)
    u0[2] = plate_profile(ProfileSpec(name=ProfileName.BUMP, amplitude=amplitude), model.plate_grid)
    return make_initial_state(None, u0, None, model)

def test_decay_fit_recovers_rate_and_offset():
    t = np.linspace(0.0, 20.0, 200)
    fit = decay_fit(t, 2.0 * np.exp(-0.3 * t) + 1.0)
    assert fit.rate == pytest.approx(0.3, rel=1e-3)
    assert fit.offset == pytest.approx(1.0, abs=1e-4)

def test_decay_fit_with_known_offset():
    t = np.linspace(0.0, 5.0, 50)
    rate, offset = decay_fit(t, 3.0 * np.exp(-1.5 * t), offset=0.0)
    assert rate == pytest.approx(1.5, rel=1e-9)
    assert offset == 0.0

def test_decay_fit_of_constant_series():
    t = np.linspace(0.0, 1.0, 20)
    assert decay_fit(t, np.full(20, 4.0)).rate == 0.0

def test_decay_fit_needs_samples():
    with pytest.raises(DiagnosticsError, match="at least 10"):
        decay_fit([0.0, 1.0, 2.0], [3.0, 2.0, 1.0])

def test_decay_fit_needs_positive_series():
    t = np.linspace(0.0, 1.0, 20)
    with pytest.raises(DiagnosticsError, match="not positive"):
        decay_fit(t, np.zeros(20), offset=0.0)

def test_ledger_at_rest():
    model = _model()
    forcing = Forcing.zeros(model)
    ledger = EnergyLedger(model, forcing)
    run(model.zero_state(), model, forcing, t_end=0.2, observers=[ledger])
    assert len(ledger.reports) == 11
    assert all(r.E_total == 0.0 and r.balance_residual == 0.0 for r in ledger.reports)
    assert ledger.reports[0].subiterations == 0
    assert all(r.subiterations == 1 for r in ledger.reports[1:])

def test_unloaded_balance_residual_is_numerical_dissipation():
    model = _model(nonlinear=False)
    forcing = Forcing.zeros(model)
    ledger = EnergyLedger(model, forcing)
    run(_bent(model), model, forcing, t_end=0.2, observers=[ledger])
    e0 = ledger.reports[0].E_total
    residuals = np.array([r.balance_residual for r in ledger.reports])
    assert residuals[0] == 0.0
    assert residuals.min() >= -1e-6 * e0
    assert ledger.reports[-1].dissipation_cum > 0.0
    assert all(r.work_cum == 0.0 for r in ledger.reports)

def test_plate_load_does_work():
    model = _model()
    forcing = Forcing.zeros(model)
    forcing.plate[2] = plate_profile(ProfileSpec(name=ProfileName.DIPOLE, amplitude=0.1), model.plate_grid)
    ledger = EnergyLedger(model, forcing, quadrature=EnergyQuadrature.TRAPEZOID)
    run(model.zero_state(), model, forcing, t_end=0.1, observers=[ledger])
    assert ledger.reports[-1].work_cum > 0.0
    assert ledger.reports[-1].E_total > 0.0

def test_snapshot_balance_audit_starts_at_zero():
    model = _model()
    forcing = Forcing.zeros(model)
    trajectory = run(_bent(model), model, forcing, t_end=0.1)
    audit = energy_balance_audit(trajectory, model, forcing)
    assert audit.residual[0] == 0.0
    assert len(audit.residual) == len(trajectory)

def test_time_derivatives_need_three_snapshots():
    model = _model()
    trajectory = run(model.zero_state(), model, Forcing.zeros(model), t_end=0.02)
    with pytest.raises(DiagnosticsError, match="at least 3 snapshots"):
        time_derivatives(trajectory, model)

def test_time_derivative_of_plate_is_stored_velocity():
    model = _model()
    trajectory = run(_bent(model), model, Forcing.zeros(model), t_end=0.1)
    derived = time_derivatives(trajectory, model)
    assert len(derived) == len(trajectory)
    for state, d in zip(trajectory.states, derived):
        np.testing.assert_array_equal(d.u_tilde, state.plate.velocity)

def test_higher_order_audits_start_at_zero():
    model = _model()
    trajectory = run(_bent(model), model, Forcing.zeros(model), t_end=0.2)
    terms = trajectory_terms(trajectory, model)
    assert higher_energy_audit(trajectory, model, terms=terms).residual[0] == 0.0
    ball = ball_identity_audit(trajectory, model, 0.1, terms=terms)
    assert ball.residual[0] == 0.0
    assert np.isfinite(ball.max_residual)
    rate = lyapunov_rate_audit(trajectory, model, 0.5, terms=terms)
    assert rate.residual.shape == (len(trajectory),)

def test_lyapunov_constant_makes_lambda_positive():
    model = _model()
    trajectory = run(_bent(model), model, Forcing.zeros(model), t_end=0.2)
    terms = trajectory_terms(trajectory, model)
    reports = lyapunov_series(trajectory, model, terms=terms)
    assert reports[0].Lambda >= 1.0 - 1e-12
    assert reports[0].Cbar == choose_c_bar(terms[0], model)
    assert reports[0].eta == pytest.approx(0.1)

def test_configured_lyapunov_constant_is_used():
    model = _model(c_bar=7.5)
    trajectory = run(model.zero_state(), model, Forcing.zeros(model), t_end=0.1)
    reports = lyapunov_series(trajectory, model)
    assert all(r.Lambda == 7.5 for r in reports)

def test_envelope_of_decaying_series():
    t = np.linspace(0.0, 10.0, 40)
    e_tilde = np.exp(-0.5 * t)
    reports = [
        LyapunovReport(t=tt, E_tilde=e, cross_terms=0.1 * e, Lambda=1.1 * e + 2.0, eta=0.1, Cbar=2.0, omega=0.1)
        for tt, e in zip(t, e_tilde)
    ]
    envelope = lyapunov_envelope(t, reports)
    assert envelope.lower_ratio == pytest.approx(1.1)
    assert envelope.upper_ratio == pytest.approx(1.1)
    assert envelope.equivalent
    assert envelope.rate == pytest.approx(0.5, rel=1e-2)
    assert envelope.offset == 2.0
    assert envelope.envelope_excess <= 0.0
    assert envelope.bounded

def _reports(t, shifted, c_bar=2.0):
    return [
        LyapunovReport(t=tt, E_tilde=s / 1.1, cross_terms=0.1 * s / 1.1, Lambda=s + c_bar, eta=0.1, Cbar=c_bar, omega=0.1)
        for tt, s in zip(t, shifted)
    ]

def test_envelope_rejects_delayed_decay():
    t = np.linspace(0.0, 10.0, 40)
    envelope = lyapunov_envelope(t, _reports(t, 1.0 / (1.0 + np.exp(2.0 * (t - 5.0)))))
    assert envelope.rate > 1.0
    assert envelope.envelope_excess > 0.1
    assert not envelope.bounded

def test_envelope_rejects_growth():
    t = np.linspace(0.0, 10.0, 40)
    envelope = lyapunov_envelope(t, _reports(t, np.exp(0.3 * t)))
    assert envelope.rate == pytest.approx(-0.3, rel=1e-6)
    assert not envelope.bounded

def test_envelope_needs_positive_tail():
    t = np.linspace(0.0, 10.0, 40)
    with pytest.raises(DiagnosticsError, match="not positive"):
        lyapunov_envelope(t, _reports(t, 1.0 - 0.2 * t))

def test_audits_vanish_on_the_rest_state():
    model = _model()
    trajectory = run(model.zero_state(), model, Forcing.zeros(model), t_end=0.2)
    terms = trajectory_terms(trajectory, model)
    assert np.all(higher_energy_audit(trajectory, model, terms=terms).residual == 0.0)
    ball = ball_identity_audit(trajectory, model, 0.5, terms=terms)
    assert np.all(ball.residual == 0.0)
    assert ball.max_residual == 0.0
    assert np.all(lyapunov_rate_audit(trajectory, model, 0.5, terms=terms).residual == 0.0)
