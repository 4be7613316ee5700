import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from fsilab.constants import DIRECT_SOLVER_LIMIT, SolverKind, TractionStencil
from fsilab.engine.grid import (
    FluidGrid, Velocity, discrete_div, lift_to_topface,
)
from fsilab.exceptions import CompatibilityError, GridError, SolverError

logger = logging.getLogger(__name__)

COMPATIBILITY_TOL = 1e-10

@dataclass(frozen=True)
class FluidField:
    """Staggered velocity, zero-mean cell pressure and the nodal top-face velocity they were solved with."""
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    p: np.ndarray
    top: np.ndarray

    @classmethod
    def zeros(cls, grid: FluidGrid) -> "FluidField":
        return cls(
            *(np.zeros(s) for s in grid.face_shapes),
            p=np.zeros(grid.cell_shape),
            top=np.zeros((3, grid.nx + 1, grid.ny + 1)),
        )

    @property
    def velocity(self) -> Velocity:
        return self.v1, self.v2, self.v3

    def extended(self, grid: FluidGrid) -> np.ndarray:
        return grid.extend(self.v1, self.v2, self.v3, self.top)

    def interior(self, grid: FluidGrid) -> np.ndarray:
        return self.extended(grid)[grid.interior_index]


class StokesWorkspace:
    """Factorized saddle-point operators for one grid, viscosity and time step.

    `dt=None` gives the steady operator. The workspace keeps the residuals of its last solve in
    `last_residuals` and must not be shared between concurrent solves.
    """
    def __init__(
        self,
        grid: FluidGrid,
        nu: float,
        dt: Optional[float] = None,
        solver: SolverKind = SolverKind.AUTO,
        tol: float = 1e-10,
        maxiter: int = 500,
    ):
        self.grid = grid
        self.nu = nu
        self.dt = dt
        self.tol = tol
        self.maxiter = maxiter
        self.vol = grid.cell_volume
        self.last_residuals: Dict[str, float] = {}

        interior, top = grid.interior_index, grid.top_index
        strain = grid.strain_form
        self.s_xx = strain[interior][:, interior].tocsc()
        self.s_xb = strain[interior][:, top].tocsr()
        self.s_bx = strain[top][:, interior].tocsr()
        self.s_bb = strain[top][:, top].tocsr()
        div = grid.divergence.tocsc()
        self.d_x = div[:, interior].tocsr()
        self.d_b = div[:, top].tocsr()

        mass = self.vol / dt if dt is not None else 0.0
        self.momentum = (mass * sp.eye(grid.n_interior) + nu * self.s_xx).tocsc()

        if solver == SolverKind.AUTO:
            solver = SolverKind.DIRECT if grid.n_interior + grid.n_cells <= DIRECT_SOLVER_LIMIT else SolverKind.UZAWA
        self.solver = SolverKind(solver)
        if self.solver == SolverKind.DIRECT:
            self._factor_saddle_point()
        else:
            self._prepare_uzawa()
        logger.debug("Stokes workspace on %r: solver=%s nu=%g dt=%s", grid, self.solver.value, nu, dt)

    def _factor_saddle_point(self) -> None:
        n_cells = self.grid.n_cells
        ones = sp.csr_matrix(np.full((n_cells, 1), self.vol))
        kkt = sp.bmat([
            [self.momentum, -self.vol * self.d_x.T, None],
            [-self.vol * self.d_x, None, ones],
            [None, ones.T, None],
        ], format="csc")
        self._lu = spla.splu(kkt)

    def _prepare_uzawa(self) -> None:
        poisson = (self.d_x @ self.d_x.T).tocsc()
        self._poisson_lu = spla.splu(poisson[1:, 1:].tocsc())
        diag = self.momentum.diagonal()
        self._jacobi = spla.LinearOperator(self.momentum.shape, matvec=lambda r: r / diag)

    def neumann_poisson(self, rhs: np.ndarray) -> np.ndarray:
        """Zero-mean solution of (D D^T) q = rhs with one cell pinned."""
        if self.solver == SolverKind.DIRECT and not hasattr(self, "_poisson_lu"):
            poisson = (self.d_x @ self.d_x.T).tocsc()
            self._poisson_lu = spla.splu(poisson[1:, 1:].tocsc())
        q = np.concatenate([[0.0], self._poisson_lu.solve(rhs[1:] - rhs.mean())])
        return q - q.mean()

    def _inner(self, rhs: np.ndarray) -> np.ndarray:
        x, info = spla.cg(self.momentum, rhs, rtol=self.tol * 1e-2, atol=0.0, maxiter=20 * self.momentum.shape[0], M=self._jacobi)
        if info != 0:
            raise SolverError("Momentum block CG did not converge.", residual=float(np.linalg.norm(self.momentum @ x - rhs)))
        return x

    def _precondition(self, r: np.ndarray) -> np.ndarray:
        z = self.nu * r
        if self.dt is not None:
            z = z + self.neumann_poisson(r) / self.dt
        z = z / self.vol
        return z - z.mean()

    def _solve_uzawa(self, rhs_x: np.ndarray, div_target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = self._inner(rhs_x)
        p = np.zeros(self.grid.n_cells)
        residual = self.vol * (div_target - self.d_x @ x)
        residual -= residual.mean()
        z = self._precondition(residual)
        direction = z.copy()
        rz = residual @ z
        for _ in range(self.maxiter):
            if np.max(np.abs(residual)) / self.vol <= self.tol:
                return x, p
            y = self._inner(self.vol * (self.d_x.T @ direction))
            schur = self.vol * (self.d_x @ y)
            alpha = rz / (direction @ schur)
            p += alpha * direction
            x += alpha * y
            residual -= alpha * schur
            z = self._precondition(residual)
            rz_new = residual @ z
            direction = z + (rz_new / rz) * direction
            rz = rz_new
        raise SolverError("Uzawa pressure iteration did not converge.", residual=float(np.max(np.abs(residual)) / self.vol))

    def solve(self, rhs_x: np.ndarray, boundary: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Solves the momentum/continuity system for interior velocities and zero-mean pressure."""
        rhs_x = rhs_x - self.nu * (self.s_xb @ boundary)
        div_target = -(self.d_b @ boundary)
        if self.solver == SolverKind.DIRECT:
            n = self.grid.n_interior
            rhs = np.concatenate([rhs_x, -self.vol * div_target, [0.0]])
            sol = self._lu.solve(rhs)
            x, p = sol[:n], sol[n:-1]
            self.last_residuals["multiplier"] = float(sol[-1])
        else:
            x, p = self._solve_uzawa(rhs_x, div_target)
        p = p - p.mean()
        divergence = float(np.max(np.abs(self.d_x @ x - div_target), initial=0.0))
        self.last_residuals["divergence"] = divergence
        scale = max(1.0, float(np.max(np.abs(boundary), initial=0.0)) / min(self.grid.spacing))
        if divergence > 1e-8 * scale:
            raise SolverError(f"Stokes solve left divergence {divergence:.3e}.", residual=divergence)
        return x, p

    def reaction(self, ext: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Boundary rows of the assembled operator: power into the fluid is boundary . reaction."""
        interior, top = self.grid.interior_index, self.grid.top_index
        return self.nu * (self.s_bx @ ext[interior] + self.s_bb @ ext[top]) - self.vol * (self.d_b.T @ p.ravel())


def _forcing_vector(g: Optional[Velocity], grid: FluidGrid) -> np.ndarray:
    if g is None:
        return np.zeros(grid.n_interior)
    zeros_top = np.zeros((3, grid.nx + 1, grid.ny + 1))
    return grid.extend(*g, zeros_top)[grid.interior_index]

def check_compatibility(psi: np.ndarray, grid: FluidGrid) -> float:
    """Net volume flux through the top face of the MAC interpolation of psi; raises when nonzero."""
    data = lift_to_topface(psi, grid)
    n3 = grid.nx * grid.ny
    flux = grid.hx * grid.hy * float(np.sum(data.values[-n3:]))
    scale = max(1.0, grid.geometry.area * float(np.max(np.abs(data.values[-n3:]), initial=0.0)))
    if abs(flux) > COMPATIBILITY_TOL * scale:
        raise CompatibilityError(f"Top-face velocity carries net volume flux {flux:.3e}; psi3 must have zero mean.")
    return flux

def _assemble(grid: FluidGrid, x: np.ndarray, p: np.ndarray, psi: np.ndarray, boundary: np.ndarray) -> FluidField:
    ext = np.zeros(grid.ext_size)
    ext[grid.interior_index] = x
    ext[grid.top_index] = boundary
    v1, v2, v3 = grid.restrict(ext)
    return FluidField(v1, v2, v3, p=p.reshape(grid.cell_shape), top=np.array(psi, dtype=float))

def solve_stokes(g: Optional[Velocity], psi: np.ndarray, workspace: StokesWorkspace) -> FluidField:
    """Steady Stokes problem -nu lap v + grad p = g, div v = 0, v = 0 on the walls, v = psi on top.

    Args:
        g (Optional[Velocity]): Volume force sampled on faces, or None for zero.
        psi (np.ndarray): Nodal top-face velocity, shape (3, nx+1, ny+1).
        workspace (StokesWorkspace): Steady workspace (`dt=None`).

    Returns:
        FluidField: The discrete solution with zero-mean pressure.

    Raises:
        CompatibilityError: If psi3 has nonzero mean.
        SolverError: If the saddle-point solve misses its tolerance.
    """
    if workspace.dt is not None:
        raise ValueError("solve_stokes requires a steady workspace (dt=None).")
    grid = workspace.grid
    check_compatibility(psi, grid)
    boundary = lift_to_topface(psi, grid).values
    x, p = workspace.solve(grid.cell_volume * _forcing_vector(g, grid), boundary)
    return _assemble(grid, x, p, psi, boundary)

def lifting_N0(psi: np.ndarray, workspace: StokesWorkspace) -> FluidField:
    return solve_stokes(None, psi, workspace)

def fluid_substep(
    v_old: FluidField,
    boundary_velocity: np.ndarray,
    G_fl: Optional[Velocity],
    dt: float,
    workspace: StokesWorkspace,
) -> FluidField:
    """One implicit Euler step of the linear fluid with prescribed top-face velocity."""
    if workspace.dt != dt:
        raise ValueError(f"Workspace was factorized for dt={workspace.dt}, got dt={dt}.")
    grid = workspace.grid
    check_compatibility(boundary_velocity, grid)
    boundary = lift_to_topface(boundary_velocity, grid).values
    rhs = grid.cell_volume * (v_old.interior(grid) / dt + _forcing_vector(G_fl, grid))
    x, p = workspace.solve(rhs, boundary)
    return _assemble(grid, x, p, boundary_velocity, boundary)

def project_divergence_free(v1: np.ndarray, v2: np.ndarray, v3: np.ndarray, workspace: StokesWorkspace) -> Velocity:
    """Discrete Leray projection of a velocity with zero wall and top values."""
    grid = workspace.grid
    zero_top = np.zeros((3, grid.nx + 1, grid.ny + 1))
    x = grid.extend(v1, v2, v3, zero_top)[grid.interior_index]
    q = workspace.neumann_poisson(workspace.d_x @ x)
    x = x - workspace.d_x.T @ q
    ext = np.zeros(grid.ext_size)
    ext[grid.interior_index] = x
    return grid.restrict(ext)


def _one_sided_traction(vf: FluidField, grid: FluidGrid, nu: float) -> np.ndarray:
    hx, hy, hz = grid.spacing
    top = vf.top
    out = np.zeros_like(top)
    inner = np.s_[1:-1, 1:-1]

    def column_avg_y(v):
        return 0.5 * (v[:, :-1] + v[:, 1:])

    def column_avg_x(v):
        return 0.5 * (v[:-1] + v[1:])

    # second-order one-sided derivative from the wall value and the first two centred values below it
    def d3_centred(wall, c1, c2):
        return (8.0 * wall / 3.0 - 3.0 * c1 + c2 / 3.0) / hz

    v1_nodes = column_avg_y(vf.v1)[1:-1]
    v2_nodes = column_avg_x(vf.v2)[:, 1:-1]
    d3v1 = d3_centred(top[0][inner], v1_nodes[..., -1], v1_nodes[..., -2])
    d3v2 = d3_centred(top[1][inner], v2_nodes[..., -1], v2_nodes[..., -2])
    d1v3 = (top[2][2:, 1:-1] - top[2][:-2, 1:-1]) / (2 * hx)
    d2v3 = (top[2][1:-1, 2:] - top[2][1:-1, :-2]) / (2 * hy)

    v3_nodes = 0.25 * (vf.v3[:-1, :-1] + vf.v3[1:, :-1] + vf.v3[:-1, 1:] + vf.v3[1:, 1:])
    d3v3 = (3 * top[2][inner] - 4 * v3_nodes[..., -2] + v3_nodes[..., -3]) / (2 * hz)
    p_nodes = 0.25 * (vf.p[:-1, :-1] + vf.p[1:, :-1] + vf.p[:-1, 1:] + vf.p[1:, 1:])
    p_top = 1.5 * p_nodes[..., -1] - 0.5 * p_nodes[..., -2]

    out[0][inner] = nu * (d3v1 + d1v3)
    out[1][inner] = nu * (d3v2 + d2v3)
    out[2][inner] = 2 * nu * d3v3 - p_top
    return out

def traction_Tf(
    vf: FluidField,
    workspace: StokesWorkspace,
    stencil: TractionStencil = TractionStencil.ONE_SIDED,
) -> np.ndarray:
    """Fluid stress on the plate, (nu(v1_3+v3_1), nu(v2_3+v3_2), 2 nu v3_3 - p), at plate nodes.

    `one_sided` evaluates the formula with second-order one-sided differences at x3=0.
    `consistent` returns the boundary reaction of the assembled operator per node area, whose
    pairing with plate velocities equals the power the fluid receives through the top face.
    """
    grid = workspace.grid
    if vf.top.shape != (3, grid.nx + 1, grid.ny + 1):
        raise GridError(f"Fluid field does not belong to {grid!r}.")
    if TractionStencil(stencil) == TractionStencil.ONE_SIDED:
        return _one_sided_traction(vf, grid, workspace.nu)
    reaction = workspace.reaction(vf.extended(grid), vf.p)
    nodal = (grid.top_interpolation.T @ reaction).reshape(3, grid.nx + 1, grid.ny + 1)
    nodal /= grid.hx * grid.hy
    nodal[:, 0, :] = nodal[:, -1, :] = 0.0
    nodal[:, :, 0] = nodal[:, :, -1] = 0.0
    return nodal

def momentum_residual(
    vf: FluidField,
    g: Optional[Velocity],
    nu: float,
    grid: FluidGrid,
    v_old: Optional[FluidField] = None,
    dt: Optional[float] = None,
) -> float:
    """Max-norm of the assembled momentum rows over interior faces, per cell volume.

    Evaluates (v - v_old)/dt + (nu S v - vol D^T p)/vol - g with the strain form S and divergence D
    that the solver factorizes, so a converged solve leaves a residual at solver tolerance.
    """
    interior = grid.interior_index
    ext = vf.extended(grid)
    res = (nu * (grid.strain_form @ ext)[interior]) / grid.cell_volume
    res = res - (grid.divergence.T @ vf.p.ravel())[interior] - _forcing_vector(g, grid)
    if v_old is not None and dt is not None:
        res = res + (ext[interior] - v_old.interior(grid)) / dt
    return float(np.max(np.abs(res), initial=0.0))

def divergence_max(vf: FluidField, grid: FluidGrid) -> float:
    return float(np.max(np.abs(discrete_div(vf, grid))))
