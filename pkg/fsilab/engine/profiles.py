"""Named analytic profiles for initial data and loads."""
from typing import Callable, Dict, Sequence

import numpy as np

from fsilab.constants import ProfileName
from fsilab.engine.grid import FluidGrid, PlateGrid, Velocity
from fsilab.exceptions import RegistryError
from fsilab.schema.common import ProfileSpec

PlateProfile = Callable[[PlateGrid, ProfileSpec], np.ndarray]
FluidProfile = Callable[[FluidGrid, ProfileSpec], Velocity]

PLATE_PROFILE_REGISTRY: Dict[str, PlateProfile] = {}
FLUID_PROFILE_REGISTRY: Dict[str, FluidProfile] = {}

def register_plate_profile(name: str) -> Callable[[PlateProfile], PlateProfile]:
    """Decorator to register a nodal plate profile."""
    def decorator(func: PlateProfile) -> PlateProfile:
        PLATE_PROFILE_REGISTRY[name] = func
        return func
    return decorator

def register_fluid_profile(name: str) -> Callable[[FluidProfile], FluidProfile]:
    """Decorator to register a staggered fluid profile."""
    def decorator(func: FluidProfile) -> FluidProfile:
        FLUID_PROFILE_REGISTRY[name] = func
        return func
    return decorator

def _sin2(values: np.ndarray, length: float, k: int = 1) -> np.ndarray:
    return np.sin(k * np.pi * values / length) ** 2

def _clamped(values: np.ndarray, grid: PlateGrid) -> np.ndarray:
    """Exact zeros on the boundary ring; sin(pi) leaves round-off there."""
    values[grid.ring_mask] = 0.0
    return values

def _scalar(value) -> float:
    if isinstance(value, (list, tuple)):
        raise ValueError(f"Plate profiles take a scalar value, got {value!r}.")
    return float(value)

# -- plate ---------------------------------------------------------------------

@register_plate_profile(ProfileName.ZERO)
def _plate_zero(grid: PlateGrid, spec: ProfileSpec) -> np.ndarray:
    return np.zeros(grid.shape)

@register_plate_profile(ProfileName.CONSTANT)
def _plate_constant(grid: PlateGrid, spec: ProfileSpec) -> np.ndarray:
    return np.full(grid.shape, spec.amplitude * _scalar(spec.value))

@register_plate_profile(ProfileName.BUMP)
def _plate_bump(grid: PlateGrid, spec: ProfileSpec) -> np.ndarray:
    """A (b - c b2) with b = sin^2(pi x/lx) sin^2(pi y/ly), b2 the doubled-frequency bump, c making the mean zero."""
    x, y = grid.node_coords()
    geo = grid.geometry
    b = _sin2(x, geo.lx) * _sin2(y, geo.ly)
    carrier = _sin2(x, geo.lx, 2) * _sin2(y, geo.ly, 2)
    ratio = np.sum(grid.weights * b) / np.sum(grid.weights * carrier)
    return _clamped(spec.amplitude * (b - ratio * carrier), grid)

@register_plate_profile(ProfileName.DIPOLE)
def _plate_dipole(grid: PlateGrid, spec: ProfileSpec) -> np.ndarray:
    x, y = grid.node_coords()
    geo = grid.geometry
    return _clamped(spec.amplitude * _sin2(x, geo.lx) * _sin2(y, geo.ly) * np.cos(np.pi * x / geo.lx), grid)

@register_plate_profile(ProfileName.TILT)
def _plate_tilt(grid: PlateGrid, spec: ProfileSpec) -> np.ndarray:
    x, _ = grid.node_coords()
    lx = grid.geometry.lx
    return spec.amplitude * (x - 0.5 * lx) / lx

@register_plate_profile(ProfileName.SINE)
def _plate_sine(grid: PlateGrid, spec: ProfileSpec) -> np.ndarray:
    x, y = grid.node_coords()
    geo = grid.geometry
    kx, ky = spec.mode
    return _clamped(spec.amplitude * np.sin(kx * np.pi * x / geo.lx) * np.sin(ky * np.pi * y / geo.ly), grid)

# -- fluid ---------------------------------------------------------------------

def _zero_velocity(grid: FluidGrid) -> Velocity:
    return tuple(np.zeros(s) for s in grid.face_shapes)

@register_fluid_profile(ProfileName.ZERO)
def _fluid_zero(grid: FluidGrid, spec: ProfileSpec) -> Velocity:
    return _zero_velocity(grid)

@register_fluid_profile(ProfileName.CONSTANT)
def _fluid_constant(grid: FluidGrid, spec: ProfileSpec) -> Velocity:
    value = spec.value if isinstance(spec.value, (list, tuple)) else (0.0, 0.0, spec.value)
    if len(value) != 3:
        raise ValueError(f"A constant fluid profile needs three components, got {value!r}.")
    return tuple(np.full(s, spec.amplitude * float(c)) for s, c in zip(grid.face_shapes, value))

@register_fluid_profile(ProfileName.GRAVITY)
def _fluid_gravity(grid: FluidGrid, spec: ProfileSpec) -> Velocity:
    v1, v2, _ = _zero_velocity(grid)
    return v1, v2, np.full(grid.face_shapes[2], -spec.amplitude)

@register_fluid_profile(ProfileName.VORTEX)
def _fluid_vortex(grid: FluidGrid, spec: ProfileSpec) -> Velocity:
    """Horizontal swirl (d_y psi, -d_x psi, 0) of psi = sin^2(pi x/lx) sin^2(pi y/ly), damped towards the top."""
    geo = grid.geometry

    def depth_shape(z: np.ndarray) -> np.ndarray:
        return np.sin(np.pi * (z + geo.depth) / geo.depth)

    x, y, z = grid.face_coords(0)
    v1 = _sin2(x, geo.lx) * np.pi / geo.ly * np.sin(2 * np.pi * y / geo.ly) * depth_shape(z)
    x, y, z = grid.face_coords(1)
    v2 = -np.pi / geo.lx * np.sin(2 * np.pi * x / geo.lx) * _sin2(y, geo.ly) * depth_shape(z)
    return spec.amplitude * v1, spec.amplitude * v2, np.zeros(grid.face_shapes[2])

@register_fluid_profile(ProfileName.SINE)
def _fluid_sine(grid: FluidGrid, spec: ProfileSpec) -> Velocity:
    """Vertical component sin(kx pi x/lx) sin(ky pi y/ly) over the depth; horizontal components zero."""
    geo = grid.geometry
    kx, ky = spec.mode
    x, y, _ = grid.face_coords(2)
    v1, v2, _ = _zero_velocity(grid)
    return v1, v2, spec.amplitude * np.sin(kx * np.pi * x / geo.lx) * np.sin(ky * np.pi * y / geo.ly)

# -- dispatch ------------------------------------------------------------------

def plate_profile(spec: ProfileSpec, grid: PlateGrid) -> np.ndarray:
    """Evaluates a plate profile at the plate nodes.

    Raises:
        RegistryError: If the profile name is not registered for plates.
    """
    handler = PLATE_PROFILE_REGISTRY.get(spec.name)
    if handler is None:
        raise RegistryError(f"Unknown plate profile '{spec.name}'. Known: {sorted(PLATE_PROFILE_REGISTRY)}.")
    return handler(grid, spec)

def fluid_profile(spec: ProfileSpec, grid: FluidGrid) -> Velocity:
    """Evaluates a fluid profile on the velocity faces.

    Raises:
        RegistryError: If the profile name is not registered for the fluid.
    """
    handler = FLUID_PROFILE_REGISTRY.get(spec.name)
    if handler is None:
        raise RegistryError(f"Unknown fluid profile '{spec.name}'. Known: {sorted(FLUID_PROFILE_REGISTRY)}.")
    return handler(grid, spec)

def plate_stack(specs: Sequence[ProfileSpec], grid: PlateGrid) -> np.ndarray:
    """(3, nx+1, ny+1) stack of three in-order plate profiles."""
    return np.stack([plate_profile(s, grid) for s in specs])
