import numpy as np
import pytest

from fsilab.constants import ProfileName
from fsilab.engine.attractor import (
    ProbeReport, dissipativity_probe, phase_distance, separation_probe, stationary_probe, stationary_solve,
)
from fsilab.engine.coupling import CoupledModel, Forcing, make_initial_state
from fsilab.engine.grid import BoxGeometry
from fsilab.engine.params import ModelParams
from fsilab.engine.profiles import plate_profile
from fsilab.exceptions import DiagnosticsError
from fsilab.schema.common import ProfileSpec

def _params(**overrides):
    base = dict(geometry=BoxGeometry(lx=1.0, ly=1.0, depth=1.0, nx=8, ny=8, nz=4), nu=1.0, dt=0.02)
    base.update(overrides)
    return ModelParams(**base)

def _bent(model, amplitude):
    u0 = np.zeros((3,) + model.plate_grid.shape)
    u0[2] = plate_profile(ProfileSpec(name=ProfileName.BUMP, amplitude=amplitude), model.plate_grid)
    return make_initial_state(None, u0, None, model)

def test_stationary_state_without_load_is_rest():
    model = CoupledModel(_params())
    report = stationary_probe(Forcing.zeros(model), model)
    assert report.kind == "stationary"
    assert report.stationary_residual <= 1e-9
    assert report.fixed_point_shift == 0.0
    assert report.passed
    assert report.initial_energies == [0.0]

def test_linear_stationary_state_is_a_fixed_point():
    model = CoupledModel(_params(nonlinear=False))
    forcing = Forcing.zeros(model)
    forcing.plate[2] = plate_profile(ProfileSpec(name=ProfileName.DIPOLE, amplitude=0.1), model.plate_grid)
    stationary = stationary_solve(forcing, model)
    assert np.max(np.abs(stationary.plate.w)) > 0.0
    assert abs(model.plate_grid.mean(stationary.plate.w)) < 1e-12
    assert stationary.fluid_divergence < 1e-12
    report = stationary_probe(forcing, model)
    assert report.stationary_residual <= report.stationary_tolerance
    assert report.fixed_point_shift <= report.fixed_point_tolerance
    assert report.passed

def test_phase_distance_is_zero_between_equal_states():
    model = CoupledModel(_params())
    state = _bent(model, 0.02)
    assert phase_distance(state, state, model) == 0.0
    assert phase_distance(state, model.zero_state(), model) > 0.0

def test_dissipativity_needs_two_states():
    params = _params()
    model = CoupledModel(params)
    with pytest.raises(DiagnosticsError, match="at least two"):
        dissipativity_probe([model.zero_state()], params, Forcing.zeros(model), t_end=0.1)

def test_small_states_start_inside_the_ball():
    params = _params(nonlinear=False)
    model = CoupledModel(params)
    states = [_bent(model, 0.01), _bent(model, 0.02)]
    report = dissipativity_probe(
        states, params, Forcing.zeros(model), t_end=0.2, labels=["small", "larger"], decay_tolerance=1.0,
    )
    assert report.R0 == pytest.approx(1.0)
    assert report.labels == ["small", "larger"]
    assert report.entry_times == [0.0, 0.0]
    assert report.left_ball == [False, False]
    assert report.initial_energies[0] < report.initial_energies[1]
    assert all(f <= i * (1 + 1e-9) for f, i in zip(report.final_energies, report.initial_energies))
    assert report.unloaded
    assert report.decay_rates[0] > 0.0
    assert report.decay_rates[0] == pytest.approx(report.decay_rates[1], rel=0.05)
    assert report.decays
    assert report.passed

def test_configured_radius_is_used():
    params = _params(R0=5.0)
    model = CoupledModel(params)
    report = dissipativity_probe([model.zero_state(), model.zero_state()], params, Forcing.zeros(model), t_end=0.1)
    assert report.R0 == 5.0
    assert report.labels == ["state_0", "state_1"]

def test_identical_states_do_not_separate():
    params = _params()
    model = CoupledModel(params)
    state = _bent(model, 0.02)
    report = separation_probe(state, state, params, Forcing.zeros(model), t_end=0.1, reference=model.zero_state())
    assert len(report.distances) == len(report.times) == 6
    assert max(report.distances) < 1e-12
    assert np.isnan(report.contraction_rate)
    assert set(report.reference_distances) == {"A", "B"}
    np.testing.assert_allclose(report.reference_distances["A"], report.reference_distances["B"], atol=1e-12)
    assert report.passed

def test_probe_report_serializes_pass_flag():
    params = _params()
    model = CoupledModel(params)
    document = stationary_probe(Forcing.zeros(model), model).to_dict()
    assert document["passed"] is True
    assert document["kind"] == "stationary"

def _decay_report(**overrides):
    base = dict(
        kind="dissipativity",
        R0=1.0,
        entry_times=[0.0, 0.0],
        left_ball=[False, False],
        unloaded=True,
        decay_rates=[2.0, 2.2],
        initial_energies=[1.0, 100.0],
        final_energies=[1e-7, 1e-5],
    )
    base.update(overrides)
    return ProbeReport(**base)

def test_unloaded_dissipativity_requires_decay():
    assert _decay_report().passed
    assert not _decay_report(final_energies=[1e-7, 1e-3]).passed
    assert not _decay_report(left_ball=[False, True]).passed

def test_unloaded_decay_rates_must_agree():
    assert not _decay_report(decay_rates=[2.0, 3.0]).passed
    assert not _decay_report(decay_rates=[2.0, float("nan")]).passed
    assert not _decay_report(decay_rates=[-0.1, -0.1]).passed
    document = _decay_report(decay_rates=[2.0, 3.0]).to_dict()
    assert document["decays"] is False
    assert document["passed"] is False

def test_states_at_rest_need_no_decay_rate():
    report = _decay_report(decay_rates=[float("nan"), 2.0], initial_energies=[0.0, 1.0], final_energies=[0.0, 1e-7])
    assert report.passed

def test_loaded_dissipativity_checks_the_ball_only():
    assert _decay_report(unloaded=False, decay_rates=[2.0, 5.0], final_energies=[0.5, 0.5]).passed
