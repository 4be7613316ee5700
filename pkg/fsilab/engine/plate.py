import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from fsilab.engine.grid import PlateGrid, scalar_plate_norms
from fsilab.exceptions import CompatibilityError, PicardDivergenceError

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class PlateField:
    """Nodal plate displacements (u1, u2, w) and velocities on the (nx+1)x(ny+1) vertices."""
    w: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    wt: np.ndarray
    u1t: np.ndarray
    u2t: np.ndarray

    @classmethod
    def zeros(cls, grid: PlateGrid) -> "PlateField":
        return cls(*(np.zeros(grid.shape) for _ in range(6)))

    @classmethod
    def from_vectors(cls, displacement: np.ndarray, velocity: np.ndarray) -> "PlateField":
        """Builds a field from (3, ...) stacks ordered (u1, u2, w)."""
        return cls(
            w=displacement[2], u1=displacement[0], u2=displacement[1],
            wt=velocity[2], u1t=velocity[0], u2t=velocity[1],
        )

    @property
    def displacement(self) -> np.ndarray:
        return np.stack([self.u1, self.u2, self.w])

    @property
    def velocity(self) -> np.ndarray:
        return np.stack([self.u1t, self.u2t, self.wt])

    def check_clamped(self, grid: PlateGrid, atol: float = 0.0) -> None:
        for name in ("w", "u1", "u2", "wt", "u1t", "u2t"):
            values = getattr(self, name)
            if values.shape != grid.shape:
                raise CompatibilityError(f"Plate field '{name}' has shape {values.shape}, expected {grid.shape}.")
            if np.max(np.abs(values[grid.ring_mask]), initial=0.0) > atol:
                raise CompatibilityError(f"Plate field '{name}' does not vanish on the clamped edge.")


@dataclass(frozen=True)
class SymTensorField2D:
    """Symmetric 2x2 tensor field stored by its three independent components (cell centres)."""
    e11: np.ndarray
    e12: np.ndarray
    e22: np.ndarray

    @property
    def trace(self) -> np.ndarray:
        return self.e11 + self.e22

    def dot(self, other: "SymTensorField2D") -> np.ndarray:
        return self.e11 * other.e11 + 2 * self.e12 * other.e12 + self.e22 * other.e22

    def __add__(self, other: "SymTensorField2D") -> "SymTensorField2D":
        return SymTensorField2D(self.e11 + other.e11, self.e12 + other.e12, self.e22 + other.e22)


def _check_mu(mu: float) -> None:
    if not 0 < mu < 0.5:
        raise ValueError(f"Poisson ratio mu must lie in (0, 0.5), got {mu}.")

def stress_C(eps: SymTensorField2D, mu: float) -> SymTensorField2D:
    """C(eps) = 2/(1-mu) [mu tr(eps) I + (1-mu) eps]."""
    _check_mu(mu)
    scale = 2.0 / (1.0 - mu)
    tr = mu * eps.trace
    return SymTensorField2D(
        scale * (tr + (1 - mu) * eps.e11),
        2.0 * eps.e12,
        scale * (tr + (1 - mu) * eps.e22),
    )

def gradient(values: np.ndarray, grid: PlateGrid) -> Tuple[np.ndarray, np.ndarray]:
    flat = np.asarray(values, dtype=float).ravel()
    shape = (grid.nx, grid.ny)
    return (grid.grad_x @ flat).reshape(shape), (grid.grad_y @ flat).reshape(shape)

def _linear_strain(u1: np.ndarray, u2: np.ndarray, grid: PlateGrid) -> SymTensorField2D:
    u1x, u1y = gradient(u1, grid)
    u2x, u2y = gradient(u2, grid)
    return SymTensorField2D(u1x, 0.5 * (u1y + u2x), u2y)

def strain_P(u: PlateField, grid: PlateGrid) -> SymTensorField2D:
    """P(u) = eps0(ubar) + 1/2 grad w (x) grad w, at cell centres."""
    gx, gy = gradient(u.w, grid)
    return _linear_strain(u.u1, u.u2, grid) + SymTensorField2D(0.5 * gx * gx, 0.5 * gx * gy, 0.5 * gy * gy)

def strain_rate_P(u: PlateField, rate: np.ndarray, grid: PlateGrid) -> SymTensorField2D:
    """P(u, v) = eps0(vbar) + 1/2 (grad w (x) grad v3 + grad v3 (x) grad w) for a (3, ...) stack v."""
    gx, gy = gradient(u.w, grid)
    rx, ry = gradient(rate[2], grid)
    mixed = SymTensorField2D(gx * rx, 0.5 * (gx * ry + gy * rx), gy * ry)
    return _linear_strain(rate[0], rate[1], grid) + mixed

def outer_gradient(values: np.ndarray, grid: PlateGrid) -> SymTensorField2D:
    gx, gy = gradient(values, grid)
    return SymTensorField2D(gx * gx, gx * gy, gy * gy)

def pairing(a: SymTensorField2D, b: SymTensorField2D, grid: PlateGrid) -> float:
    """(a, b) integrated over the plate with the cell-centre rule."""
    return grid.node_area * float(np.sum(a.dot(b)))

def _divergence_transpose(fx: np.ndarray, fy: np.ndarray, grid: PlateGrid) -> np.ndarray:
    out = -(grid.grad_x.T @ fx.ravel() + grid.grad_y.T @ fy.ravel()).reshape(grid.shape)
    out[grid.ring_mask] = 0.0
    return out

def vonkarman_forces(u: PlateField, mu: float, grid: PlateGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Nodal div(N grad w) and div N with N = C(P(u)), in conservative (adjoint-gradient) form.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Transversal force (nx+1, ny+1) and in-plane force (2, nx+1, ny+1),
        zero on the clamped ring.
    """
    stress = stress_C(strain_P(u, grid), mu)
    gx, gy = gradient(u.w, grid)
    transversal = _divergence_transpose(stress.e11 * gx + stress.e12 * gy, stress.e12 * gx + stress.e22 * gy, grid)
    in_plane = np.stack([
        _divergence_transpose(stress.e11, stress.e12, grid),
        _divergence_transpose(stress.e12, stress.e22, grid),
    ])
    return transversal, in_plane

def nodal_laplacian(w: np.ndarray, grid: PlateGrid) -> np.ndarray:
    return (grid.laplacian @ grid.interior(w)).reshape(grid.shape)

def bending_pairing(a: np.ndarray, b: np.ndarray, grid: PlateGrid) -> float:
    """(lap a, lap b) with trapezoid weights."""
    return float(np.sum(grid.weights * nodal_laplacian(a, grid) * nodal_laplacian(b, grid)))

def membrane_pairing(u: PlateField, mu: float, grid: PlateGrid) -> float:
    """(C(P(u)), P(u))."""
    strain = strain_P(u, grid)
    return pairing(stress_C(strain, mu), strain, grid)

def plate_energy(u: PlateField, mu: float, grid: PlateGrid) -> float:
    return 0.5 * (bending_pairing(u.w, u.w, grid) + membrane_pairing(u, mu, grid))


@dataclass(frozen=True)
class CoercivityTerms:
    bending: float
    membrane: float
    load: float
    norm_sq: float
    grad_w_sq: float

    @property
    def lhs(self) -> float:
        return self.bending + self.membrane + self.load

    @property
    def ratio(self) -> float:
        elastic = self.bending + self.membrane
        return self.norm_sq / elastic if elastic > 0 else float("inf")

def coercivity_probe(u: PlateField, G_pl: np.ndarray, mu: float, grid: PlateGrid) -> CoercivityTerms:
    """Terms of ||lap w||^2 + (C(P),P) + (G,u) >= c ||u||_W^2 - C(G), for monitoring ratios."""
    load = float(np.sum(grid.weights * np.sum(G_pl * u.displacement, axis=0)))
    w_norms = scalar_plate_norms(u.w, grid)
    norm_sq = w_norms.h2**2 + scalar_plate_norms(u.u1, grid).h1**2 + scalar_plate_norms(u.u2, grid).h1**2
    gx, gy = gradient(u.w, grid)
    return CoercivityTerms(
        bending=bending_pairing(u.w, u.w, grid),
        membrane=membrane_pairing(u, mu, grid),
        load=load,
        norm_sq=norm_sq,
        grad_w_sq=grid.node_area * float(np.sum(gx**2 + gy**2)),
    )


class PlateWorkspace:
    """Factorized plate operators for one grid, Poisson ratio and time step (`dt=None` is static)."""
    def __init__(
        self,
        grid: PlateGrid,
        mu: float,
        dt: Optional[float] = None,
        nonlinear: bool = True,
        picard_tol: float = 1e-9,
        picard_max: int = 50,
        relaxation: float = 1.0,
    ):
        _check_mu(mu)
        self.grid = grid
        self.mu = mu
        self.dt = dt
        self.nonlinear = nonlinear
        self.picard_tol = picard_tol
        self.picard_max = picard_max
        self.relaxation = relaxation
        self.last_residuals: Dict[str, float] = {}

        inertia = grid.node_area / dt**2 if dt is not None else 0.0
        n = grid.n_interior
        self._w_lu = spla.splu((inertia * sp.eye(n) + grid.bending_stiffness).tocsc())
        self._u_lu = spla.splu((inertia * sp.eye(2 * n) + self.membrane_stiffness).tocsc())
        self.volume_mode = self._w_lu.solve(np.full(n, grid.node_area))

    @cached_property
    def membrane_stiffness(self) -> sp.csc_matrix:
        """Hessian of 1/2 (C(eps0), eps0) over interior in-plane unknowns."""
        g = self.grid
        gx = g.grad_x @ g.restriction.T
        gy = g.grad_y @ g.restriction.T
        zero = sp.csr_matrix(gx.shape)
        trace = sp.hstack([gx, gy])
        xx = sp.hstack([gx, zero])
        yy = sp.hstack([zero, gy])
        shear = sp.hstack([gy, gx])
        mu = self.mu
        form = mu * trace.T @ trace + (1 - mu) * (xx.T @ xx + yy.T @ yy + 0.5 * shear.T @ shear)
        return (g.node_area * 2.0 / (1 - mu) * form).tocsc()

    def solve_elastic(
        self,
        inertia: np.ndarray,
        load: np.ndarray,
        initial: PlateField,
        volume_target: Optional[float] = None,
    ) -> PlateField:
        """Picard iteration for K_dt u = inertia + area * (load + lagged von Karman terms).

        `inertia` and `load` are (3, nx+1, ny+1) stacks ordered (u1, u2, w). With `volume_target` the
        interior sum of w is held at that value through a uniform pressure multiplier.
        """
        g = self.grid
        area = g.node_area
        n = g.n_interior
        w = initial.w.copy()
        u1, u2 = initial.u1.copy(), initial.u2.copy()
        zeros = np.zeros(g.shape)
        multiplier = 0.0
        increment = np.inf
        for iteration in range(1, self.picard_max + 1):
            in_plane_rhs = np.concatenate([g.interior(inertia[0] + area * load[0]), g.interior(inertia[1] + area * load[1])])
            if self.nonlinear:
                _, membrane = vonkarman_forces(PlateField(w, zeros, zeros, zeros, zeros, zeros), self.mu, g)
                in_plane_rhs += area * np.concatenate([g.interior(membrane[0]), g.interior(membrane[1])])
            solved = self._u_lu.solve(in_plane_rhs)
            new_u1 = u1 + self.relaxation * (g.scatter(solved[:n]) - u1)
            new_u2 = u2 + self.relaxation * (g.scatter(solved[n:]) - u2)

            w_rhs = g.interior(inertia[2] + area * load[2])
            if self.nonlinear:
                transversal, _ = vonkarman_forces(PlateField(w, new_u1, new_u2, zeros, zeros, zeros), self.mu, g)
                w_rhs = w_rhs + area * g.interior(transversal)
            w_int = self._w_lu.solve(w_rhs)
            if volume_target is not None:
                multiplier = (volume_target - w_int.sum()) / self.volume_mode.sum()
                w_int = w_int + multiplier * self.volume_mode
            new_w = w + self.relaxation * (g.scatter(w_int) - w)

            increment = max(
                float(np.max(np.abs(new_w - w))),
                float(np.max(np.abs(new_u1 - u1))),
                float(np.max(np.abs(new_u2 - u2))),
            )
            w, u1, u2 = new_w, new_u1, new_u2
            if not self.nonlinear or increment <= self.picard_tol:
                break
        else:
            raise PicardDivergenceError(
                f"Plate Picard iteration stalled after {self.picard_max} iterations (increment {increment:.3e}).",
                residual=increment,
            )
        self.last_residuals = {
            "picard_iterations": float(iteration),
            "picard_increment": increment if self.nonlinear else 0.0,
            "volume_multiplier": multiplier,
        }
        return replace(initial, w=w, u1=u1, u2=u2)


def plate_substep(
    u_old: PlateField,
    traction: np.ndarray,
    G_pl: np.ndarray,
    dt: float,
    workspace: PlateWorkspace,
    hold_volume: bool = False,
) -> PlateField:
    """One implicit Euler step of the plate under a prescribed fluid traction.

    Args:
        u_old (PlateField): State at the previous time level.
        traction (np.ndarray): Fluid traction (3, nx+1, ny+1), ordered (T1, T2, T3).
        G_pl (np.ndarray): Plate load (3, nx+1, ny+1), ordered (G1, G2, G3).
        dt (float): Time step; must match the workspace.
        workspace (PlateWorkspace): Factorized operators for this dt.
        hold_volume (bool): Keep the mean of w fixed through a uniform pressure multiplier.

    Returns:
        PlateField: New displacements with velocities (u - u_old)/dt.

    Raises:
        PicardDivergenceError: If the lagged nonlinear iteration does not converge.
    """
    if workspace.dt != dt:
        raise ValueError(f"Plate workspace was factorized for dt={workspace.dt}, got dt={dt}.")
    g = workspace.grid
    predictor = u_old.displacement + dt * u_old.velocity
    inertia = g.node_area / dt**2 * predictor
    target = float(g.interior(u_old.w).sum()) if hold_volume else None
    solved = workspace.solve_elastic(inertia, G_pl - traction, u_old, volume_target=target)
    velocity = (solved.displacement - u_old.displacement) / dt
    return PlateField.from_vectors(solved.displacement, velocity)

def static_plate_solve(
    load: np.ndarray,
    workspace: PlateWorkspace,
    hold_volume: bool = True,
    initial: Optional[PlateField] = None,
) -> PlateField:
    """Equilibrium of the clamped plate under a nodal load, with zero mean of w when `hold_volume`."""
    if workspace.dt is not None:
        raise ValueError("static_plate_solve requires a static workspace (dt=None).")
    g = workspace.grid
    start = initial if initial is not None else PlateField.zeros(g)
    target = 0.0 if hold_volume else None
    return workspace.solve_elastic(np.zeros((3,) + g.shape), load, start, volume_target=target)

def project_mean_zero(values: np.ndarray, grid: PlateGrid) -> np.ndarray:
    """L2-orthogonal projection of an interior-supported nodal field onto zero mean."""
    out = np.array(values, dtype=float)
    out[grid.interior_mask] -= out[grid.interior_mask].mean()
    return out
