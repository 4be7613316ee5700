import numpy as np
import pytest

from fsilab.constants import ProfileName
from fsilab.engine.grid import BoxGeometry, build_grids
from fsilab.engine.profiles import fluid_profile, plate_profile, plate_stack
from fsilab.exceptions import RegistryError
from fsilab.schema.common import ProfileSpec

GEOMETRY = BoxGeometry(lx=1.0, ly=2.0, depth=1.0, nx=8, ny=8, nz=4)

@pytest.fixture
def grids():
    return build_grids(GEOMETRY)

def test_unknown_plate_profile(grids):
    _, pg = grids
    with pytest.raises(RegistryError, match="Unknown plate profile 'spiral'"):
        plate_profile(ProfileSpec(name="spiral"), pg)

def test_unknown_fluid_profile(grids):
    fg, _ = grids
    with pytest.raises(RegistryError, match="Unknown fluid profile"):
        fluid_profile(ProfileSpec(name=ProfileName.DIPOLE), fg)

@pytest.mark.parametrize("name", [ProfileName.BUMP, ProfileName.DIPOLE, ProfileName.SINE])
def test_plate_profiles_are_clamped(grids, name):
    _, pg = grids
    values = plate_profile(ProfileSpec(name=name, amplitude=0.3), pg)
    assert values.shape == pg.shape
    assert np.all(values[pg.ring_mask] == 0.0)
    assert np.max(np.abs(values)) > 0.0

def test_bump_keeps_volume(grids):
    _, pg = grids
    values = plate_profile(ProfileSpec(name=ProfileName.BUMP, amplitude=2.0), pg)
    assert abs(pg.mean(values)) < 1e-12

def test_constant_plate_profile(grids):
    _, pg = grids
    values = plate_profile(ProfileSpec(value=0.5, amplitude=2.0), pg)
    assert np.all(values == 1.0)

def test_plate_profiles_take_scalars(grids):
    _, pg = grids
    with pytest.raises(ValueError, match="scalar"):
        plate_profile(ProfileSpec(value=[1.0, 2.0, 3.0]), pg)

def test_plate_stack_order(grids):
    _, pg = grids
    stack = plate_stack([ProfileSpec(value=1.0), ProfileSpec(value=2.0), ProfileSpec(value=3.0)], pg)
    assert stack.shape == (3,) + pg.shape
    assert [stack[i, 0, 0] for i in range(3)] == [1.0, 2.0, 3.0]

def test_constant_fluid_profile(grids):
    fg, _ = grids
    v1, v2, v3 = fluid_profile(ProfileSpec(value=[1.0, 2.0, 3.0]), fg)
    assert np.all(v1 == 1.0) and np.all(v2 == 2.0) and np.all(v3 == 3.0)
    assert tuple(v.shape for v in (v1, v2, v3)) == tuple(fg.face_shapes)

def test_gravity_points_down(grids):
    fg, _ = grids
    v1, v2, v3 = fluid_profile(ProfileSpec(name=ProfileName.GRAVITY, amplitude=9.81), fg)
    assert not np.any(v1) and not np.any(v2)
    assert np.all(v3 == -9.81)

def test_value_only_for_constant_profiles():
    with pytest.raises(ValueError, match="only used by constant"):
        ProfileSpec(name=ProfileName.BUMP, value=1.0)

def test_mode_numbers_must_be_positive():
    with pytest.raises(ValueError, match="mode numbers"):
        ProfileSpec(name=ProfileName.SINE, mode=(0, 1))
