import numpy as np
import pytest

from fsilab.constants import ProfileName, VolumeProjection
from fsilab.engine.coupling import CoupledModel, Forcing, advance, make_initial_state, run
from fsilab.engine.diagnostics import EnergyLedger, energy_total
from fsilab.engine.grid import BoxGeometry
from fsilab.engine.params import ModelParams
from fsilab.engine.profiles import plate_profile
from fsilab.exceptions import CompatibilityError, SimulationError
from fsilab.schema.common import ProfileSpec

def _params(**overrides):
    base = dict(
        geometry=BoxGeometry(lx=1.0, ly=1.0, depth=1.0, nx=8, ny=8, nz=4),
        nu=1.0,
        dt=0.02,
    )
    base.update(overrides)
    return ModelParams(**base)

def _bent_state(model, amplitude=0.05):
    u0 = np.zeros((3,) + model.plate_grid.shape)
    u0[2] = plate_profile(ProfileSpec(name=ProfileName.BUMP, amplitude=amplitude), model.plate_grid)
    return make_initial_state(None, u0, None, model)

def test_rest_state_is_a_fixed_point():
    model = CoupledModel(_params())
    state, report = advance(model.zero_state(), model, Forcing.zeros(model))
    assert report.subiterations == 1
    assert report.interface_residual == 0.0
    assert state.time == pytest.approx(0.02)
    assert not np.any(state.plate.displacement)

def test_initial_velocity_with_net_volume_change_is_rejected():
    model = CoupledModel(_params())
    u1 = np.zeros((3,) + model.plate_grid.shape)
    u1[2] = plate_profile(ProfileSpec(name=ProfileName.SINE), model.plate_grid)
    with pytest.raises(CompatibilityError, match="mean"):
        make_initial_state(None, None, u1, model)

def test_unclamped_initial_displacement_is_rejected():
    model = CoupledModel(_params())
    u0 = np.ones((3,) + model.plate_grid.shape)
    with pytest.raises(CompatibilityError, match="clamped edge"):
        make_initial_state(None, u0, None, model)

def test_initial_fluid_matches_plate_velocity_on_top():
    model = CoupledModel(_params())
    u1 = np.zeros((3,) + model.plate_grid.shape)
    u1[2] = plate_profile(ProfileSpec(name=ProfileName.BUMP, amplitude=0.1), model.plate_grid)
    state = make_initial_state(None, None, u1, model)
    np.testing.assert_array_equal(state.fluid.top, u1)
    np.testing.assert_array_equal(state.plate.wt, u1[2])

@pytest.mark.parametrize("projection", [VolumeProjection.ENERGY, VolumeProjection.L2])
def test_mean_displacement_is_conserved(projection):
    model = CoupledModel(_params(volume_projection=projection))
    state = _bent_state(model)
    trajectory = run(state, model, Forcing.zeros(model), t_end=0.2)
    means = [model.plate_grid.mean(s.plate.w) for s in trajectory.states]
    assert max(abs(m - means[0]) for m in means) < 1e-10

def test_unloaded_linear_energy_decreases():
    model = CoupledModel(_params(nonlinear=False))
    forcing = Forcing.zeros(model)
    ledger = EnergyLedger(model, forcing)
    run(_bent_state(model), model, forcing, t_end=0.2, observers=[ledger])
    energies = [r.E_total for r in ledger.reports]
    slack = 1e-6 * energies[0]
    assert len(energies) == 11
    assert all(b <= a + slack for a, b in zip(energies, energies[1:]))
    assert energies[-1] < energies[0]

def test_snapshot_stride():
    model = CoupledModel(_params(snapshot_stride=2))
    trajectory = run(model.zero_state(), model, Forcing.zeros(model), t_end=0.2)
    assert len(trajectory) == 6
    assert len(trajectory.reports) == 10
    assert trajectory.spacing == pytest.approx(0.04)
    assert trajectory.final_state.time == pytest.approx(0.2)

def test_run_rejects_nonpositive_horizon():
    model = CoupledModel(_params())
    with pytest.raises(ValueError, match="t_end"):
        run(model.zero_state(), model, Forcing.zeros(model), t_end=0.0)

def test_failed_step_keeps_last_state():
    model = CoupledModel(_params(coupling_max=1, tol_couple=1e-14))
    state = _bent_state(model)
    with pytest.raises(SimulationError) as excinfo:
        run(state, model, Forcing.zeros(model), t_end=0.1)
    assert excinfo.value.last_state is state

def test_scaled_forcing():
    model = CoupledModel(_params())
    forcing = Forcing.zeros(model)
    forcing.plate[2] = 1.0
    doubled = forcing.scaled(2.0)
    assert doubled.fluid is None
    assert np.all(doubled.plate[2] == 2.0)

def test_energy_parts_at_rest():
    model = CoupledModel(_params())
    parts = energy_total(model.zero_state(), model)
    assert parts.E_total == 0.0
