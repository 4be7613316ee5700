"""Symbolic manufactured solutions for the steady Stokes problem and the clamped plate."""
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
import sympy as sym

from fsilab.engine.grid import FluidGrid, PlateGrid, Velocity

X, Y, Z = sym.symbols("x y z", real=True)

def _numeric(expr: sym.Expr, args: Tuple[sym.Symbol, ...]) -> Callable[..., np.ndarray]:
    """Lambdified expression that broadcasts constants to the shape of its inputs."""
    func = sym.lambdify(args, expr, modules="numpy")

    def evaluate(*values: np.ndarray) -> np.ndarray:
        shape = np.broadcast(*values).shape
        return np.array(np.broadcast_to(func(*values), shape), dtype=float)
    return evaluate

def _clamped_bump(lx: float, ly: float) -> sym.Expr:
    return sym.sin(sym.pi * X / lx) ** 2 * sym.sin(sym.pi * Y / ly) ** 2


@dataclass(frozen=True)
class StokesSolution:
    """Exact steady Stokes fields: velocity, pressure, the forcing producing them and the top traction."""
    velocity: Tuple[Callable, Callable, Callable]
    pressure: Callable
    forcing: Tuple[Callable, Callable, Callable]
    traction: Tuple[Callable, Callable, Callable]

    def sample_velocity(self, grid: FluidGrid) -> Velocity:
        return tuple(self.velocity[c](*grid.face_coords(c)) for c in range(3))

    def sample_forcing(self, grid: FluidGrid) -> Velocity:
        return tuple(self.forcing[c](*grid.face_coords(c)) for c in range(3))

    def sample_pressure(self, grid: FluidGrid) -> np.ndarray:
        p = self.pressure(*grid.cell_coords())
        return p - p.mean()

    def top_velocity(self, grid: PlateGrid) -> np.ndarray:
        x, y = grid.node_coords()
        z = np.zeros_like(x)
        return np.stack([self.velocity[c](x, y, z) for c in range(3)])

    def top_traction(self, grid: PlateGrid) -> np.ndarray:
        """Exact traction at the plate nodes; p already has zero mean over the box."""
        x, y = grid.node_coords()
        return np.stack([self.traction[c](x, y, np.zeros_like(x)) for c in range(3)])

@lru_cache(maxsize=16)
def stokes_solution(lx: float, ly: float, depth: float, nu: float) -> StokesSolution:
    """v = curl(phi (1,1,1)) with phi = sin^2(pi x/lx) sin^2(pi y/ly) (z+D)^3 / D^3.

    v vanishes on the walls and the bottom with its top trace carrying zero net flux;
    p = cos(pi x/lx) cos(pi y/ly) (1 + z/D).
    """
    phi = _clamped_bump(lx, ly) * (Z + depth) ** 3 / depth**3
    v = (
        sym.diff(phi, Y) - sym.diff(phi, Z),
        sym.diff(phi, Z) - sym.diff(phi, X),
        sym.diff(phi, X) - sym.diff(phi, Y),
    )
    p = sym.cos(sym.pi * X / lx) * sym.cos(sym.pi * Y / ly) * (1 + Z / depth)
    coords = (X, Y, Z)
    g = tuple(
        -nu * sum(sym.diff(v[c], a, 2) for a in coords) + sym.diff(p, coords[c])
        for c in range(3)
    )
    t = (
        nu * (sym.diff(v[0], Z) + sym.diff(v[2], X)),
        nu * (sym.diff(v[1], Z) + sym.diff(v[2], Y)),
        2 * nu * sym.diff(v[2], Z) - p,
    )
    return StokesSolution(
        velocity=tuple(_numeric(e, coords) for e in v),
        pressure=_numeric(p, coords),
        forcing=tuple(_numeric(sym.simplify(e), coords) for e in g),
        traction=tuple(_numeric(e, coords) for e in t),
    )


@dataclass(frozen=True)
class PlateSolution:
    """Exact clamped plate displacement (u1, u2, w) with the linear static loads producing it."""
    displacement: Tuple[Callable, Callable, Callable]
    load: Tuple[Callable, Callable, Callable]

    def sample_displacement(self, grid: PlateGrid) -> np.ndarray:
        x, y = grid.node_coords()
        return np.stack([f(x, y) for f in self.displacement])

    def sample_load(self, grid: PlateGrid) -> np.ndarray:
        x, y = grid.node_coords()
        return np.stack([f(x, y) for f in self.load])

@lru_cache(maxsize=16)
def plate_solution(lx: float, ly: float, mu: float) -> PlateSolution:
    """w = b, u1 = b sin(2 pi x/lx), u2 = b sin(2 pi y/ly) with b the clamped bump.

    Loads are lap^2 w and -div C(eps0(u)), the linear static operators.
    """
    b = _clamped_bump(lx, ly)
    w = b
    u1 = b * sym.sin(2 * sym.pi * X / lx)
    u2 = b * sym.sin(2 * sym.pi * Y / ly)

    def lap(f: sym.Expr) -> sym.Expr:
        return sym.diff(f, X, 2) + sym.diff(f, Y, 2)

    e11, e22 = sym.diff(u1, X), sym.diff(u2, Y)
    e12 = (sym.diff(u1, Y) + sym.diff(u2, X)) / 2
    scale = 2 / (1 - sym.Float(mu))
    s11 = scale * (mu * (e11 + e22) + (1 - mu) * e11)
    s22 = scale * (mu * (e11 + e22) + (1 - mu) * e22)
    s12 = 2 * e12
    loads = (
        -(sym.diff(s11, X) + sym.diff(s12, Y)),
        -(sym.diff(s12, X) + sym.diff(s22, Y)),
        lap(lap(w)),
    )
    args = (X, Y)
    return PlateSolution(
        displacement=tuple(_numeric(e, args) for e in (u1, u2, w)),
        load=tuple(_numeric(e, args) for e in loads),
    )
