"""Box geometry, the staggered fluid grid, the clamped plate grid and their discrete operators.

Fluid unknowns live on a MAC grid over (0,lx)x(0,ly)x(-depth,0). Every velocity component is also
addressed on an *extended* layout that appends the tangential wall values half a cell outside the
box, so wall and top-face Dirichlet data enter the operators as ordinary vector entries. Plate
unknowns live on the (nx+1)x(ny+1) vertices of the top face.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

from fsilab.exceptions import GridError

if TYPE_CHECKING:
    from fsilab.engine.stokes import FluidField

logger = logging.getLogger(__name__)

Velocity = Tuple[np.ndarray, np.ndarray, np.ndarray]

class BoxGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    lx: float = Field(gt=0)
    ly: float = Field(gt=0)
    depth: float = Field(gt=0)
    nx: int = Field(ge=4)
    ny: int = Field(ge=4)
    nz: int = Field(ge=4)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def refined(self, factor: int) -> "BoxGeometry":
        return self.model_copy(update={"nx": self.nx * factor, "ny": self.ny * factor, "nz": self.nz * factor})


def _node_diff(n: int, h: float) -> sp.csr_matrix:
    """Differences of n+1 nodal values, located at the n cell centres."""
    return sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr") / h

def _centre_diff(n: int, h: float) -> sp.csr_matrix:
    """Differences of n centred values padded by their two wall values, located at the n+1 nodes."""
    spacing = np.full(n + 1, h)
    spacing[[0, -1]] = h / 2
    diff = sp.diags([-np.ones(n + 1), np.ones(n + 1)], [0, 1], shape=(n + 1, n + 2), format="csr")
    return (sp.diags(1.0 / spacing) @ diff).tocsr()

def _centre_select(n: int) -> sp.csr_matrix:
    return sp.eye(n, n + 2, k=1, format="csr")

def _inner_select(n: int) -> sp.csr_matrix:
    return sp.eye(n - 1, n + 1, k=1, format="csr")

def _average(n: int) -> sp.csr_matrix:
    return sp.diags([np.full(n, 0.5), np.full(n, 0.5)], [0, 1], shape=(n, n + 1), format="csr")

def node_weights(n: int, h: float) -> np.ndarray:
    weights = np.full(n + 1, h)
    weights[[0, -1]] = h / 2
    return weights

def _kron3(a, b, c) -> sp.csr_matrix:
    return sp.kron(a, sp.kron(b, c, format="csr"), format="csr")

def _outer3(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.einsum("i,j,k->ijk", a, b, c).ravel()


class FluidGrid:
    def __init__(self, geometry: BoxGeometry):
        self.geometry = geometry
        self.nx, self.ny, self.nz = geometry.nx, geometry.ny, geometry.nz
        self.hx = geometry.lx / self.nx
        self.hy = geometry.ly / self.ny
        self.hz = geometry.depth / self.nz
        self.counts = (self.nx, self.ny, self.nz)
        self.spacing = (self.hx, self.hy, self.hz)
        self.cell_volume = self.hx * self.hy * self.hz
        self.cell_shape = (self.nx, self.ny, self.nz)
        self.face_shapes = (
            (self.nx + 1, self.ny, self.nz),
            (self.nx, self.ny + 1, self.nz),
            (self.nx, self.ny, self.nz + 1),
        )
        self.ext_shapes = (
            (self.nx + 1, self.ny + 2, self.nz + 2),
            (self.nx + 2, self.ny + 1, self.nz + 2),
            (self.nx + 2, self.ny + 2, self.nz + 1),
        )
        sizes = [int(np.prod(s)) for s in self.ext_shapes]
        self.ext_offsets = (0, sizes[0], sizes[0] + sizes[1])
        self.ext_size = sum(sizes)
        self.n_cells = self.nx * self.ny * self.nz

    def __repr__(self) -> str:
        return f"FluidGrid(nx={self.nx}, ny={self.ny}, nz={self.nz})"

    # -- coordinates -------------------------------------------------------

    def _axis(self, axis: int, kind: str) -> np.ndarray:
        n, h = self.counts[axis], self.spacing[axis]
        origin = -self.geometry.depth if axis == 2 else 0.0
        if kind == "node":
            return origin + h * np.arange(n + 1)
        return origin + h * (np.arange(n) + 0.5)

    def face_coords(self, component: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Meshgrid coordinates of the faces carrying velocity component `component`."""
        axes = [self._axis(a, "node" if a == component else "centre") for a in range(3)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def cell_coords(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(*[self._axis(a, "centre") for a in range(3)], indexing="ij"))

    # -- extended layout ---------------------------------------------------

    def _ext_index(self, component: int, slices) -> np.ndarray:
        shape = self.ext_shapes[component]
        idx = np.arange(int(np.prod(shape))).reshape(shape)[slices]
        return idx.ravel() + self.ext_offsets[component]

    @cached_property
    def interior_index(self) -> np.ndarray:
        nx, ny, nz = self.counts
        return np.concatenate([
            self._ext_index(0, np.s_[1:nx, 1:ny + 1, 1:nz + 1]),
            self._ext_index(1, np.s_[1:nx + 1, 1:ny, 1:nz + 1]),
            self._ext_index(2, np.s_[1:nx + 1, 1:ny + 1, 1:nz]),
        ])

    @cached_property
    def top_index(self) -> np.ndarray:
        nx, ny, nz = self.counts
        return np.concatenate([
            self._ext_index(0, np.s_[1:nx, 1:ny + 1, nz + 1]),
            self._ext_index(1, np.s_[1:nx + 1, 1:ny, nz + 1]),
            self._ext_index(2, np.s_[1:nx + 1, 1:ny + 1, nz]),
        ])

    @property
    def n_interior(self) -> int:
        return self.interior_index.size

    @cached_property
    def top_interpolation(self) -> sp.csr_matrix:
        """Maps plate-layout nodal velocities (3, nx+1, ny+1) to top-face values on the extended layout."""
        nx, ny = self.nx, self.ny
        return sp.block_diag([
            sp.kron(_inner_select(nx), _average(ny)),
            sp.kron(_average(nx), _inner_select(ny)),
            sp.kron(_average(nx), _average(ny)),
        ], format="csr")

    def extend(self, v1: np.ndarray, v2: np.ndarray, v3: np.ndarray, top: np.ndarray) -> np.ndarray:
        nx, ny, nz = self.counts
        ext = np.zeros(self.ext_size)
        blocks = [ext[self.ext_offsets[c]:self.ext_offsets[c] + int(np.prod(s))].reshape(s)
                  for c, s in enumerate(self.ext_shapes)]
        blocks[0][:, 1:ny + 1, 1:nz + 1] = v1
        blocks[1][1:nx + 1, :, 1:nz + 1] = v2
        blocks[2][1:nx + 1, 1:ny + 1, :] = v3
        ext[self.top_index] = self.top_interpolation @ np.asarray(top).ravel()
        return ext

    def restrict(self, ext: np.ndarray) -> Velocity:
        """Standard staggered arrays from an extended vector."""
        nx, ny, nz = self.counts
        blocks = [ext[self.ext_offsets[c]:self.ext_offsets[c] + int(np.prod(s))].reshape(s)
                  for c, s in enumerate(self.ext_shapes)]
        return (
            blocks[0][:, 1:ny + 1, 1:nz + 1].copy(),
            blocks[1][1:nx + 1, :, 1:nz + 1].copy(),
            blocks[2][1:nx + 1, 1:ny + 1, :].copy(),
        )

    # -- assembled operators -----------------------------------------------

    def _partial(self, component: int, axis: int) -> Tuple[sp.csr_matrix, np.ndarray]:
        """d(v^component)/d(x_axis) on the extended layout, with the quadrature weights of its location."""
        factors, weights = [], []
        for b in range(3):
            n, h = self.counts[b], self.spacing[b]
            is_node = b == component
            if b == axis:
                factors.append(_node_diff(n, h) if is_node else _centre_diff(n, h))
                weights.append(np.full(n, h) if is_node else node_weights(n, h))
            elif is_node:
                factors.append(sp.eye(n + 1, format="csr"))
                weights.append(node_weights(n, h))
            else:
                factors.append(_centre_select(n))
                weights.append(np.full(n, h))
        local = _kron3(*factors)
        blocks = [local if c == component else
                  sp.csr_matrix((local.shape[0], int(np.prod(self.ext_shapes[c])))) for c in range(3)]
        return sp.hstack(blocks, format="csr"), _outer3(*weights)

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        """Cell divergence of an extended velocity vector."""
        return sum(self._partial(c, c)[0] for c in range(3)).tocsr()

    @cached_property
    def strain_form(self) -> sp.csr_matrix:
        """Matrix S with z.S.z = E(z,z) = 1/2 sum_ij |d_j v^i + d_i v^j|^2 (symmetric-gradient form)."""
        form = sp.csr_matrix((self.ext_size, self.ext_size))
        for c in range(3):
            op, w = self._partial(c, c)
            form = form + 2.0 * (op.T @ sp.diags(w) @ op)
        for a in range(3):
            for c in range(a + 1, 3):
                op_ca, w = self._partial(c, a)
                op_ac, _ = self._partial(a, c)
                shear = op_ca + op_ac
                form = form + shear.T @ sp.diags(w) @ shear
        return form.tocsr()

    @cached_property
    def gradient_form(self) -> sp.csr_matrix:
        """Matrix G with z.G.z = sum over components of |grad v^i|^2 (Dirichlet form)."""
        form = sp.csr_matrix((self.ext_size, self.ext_size))
        for c in range(3):
            for a in range(3):
                op, w = self._partial(c, a)
                form = form + op.T @ sp.diags(w) @ op
        return form.tocsr()


class PlateGrid:
    def __init__(self, geometry: BoxGeometry):
        self.geometry = geometry
        self.nx, self.ny = geometry.nx, geometry.ny
        self.hx = geometry.lx / self.nx
        self.hy = geometry.ly / self.ny
        self.node_area = self.hx * self.hy
        self.shape = (self.nx + 1, self.ny + 1)
        self.n_nodes = self.shape[0] * self.shape[1]
        interior = np.zeros(self.shape, dtype=bool)
        interior[1:-1, 1:-1] = True
        self.interior_mask = interior
        self.ring_mask = ~interior
        self.interior_index = np.flatnonzero(interior.ravel())
        self.n_interior = self.interior_index.size

    def __repr__(self) -> str:
        return f"PlateGrid(nx={self.nx}, ny={self.ny})"

    def node_coords(self) -> Tuple[np.ndarray, np.ndarray]:
        x = self.hx * np.arange(self.nx + 1)
        y = self.hy * np.arange(self.ny + 1)
        return tuple(np.meshgrid(x, y, indexing="ij"))

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights on the nodes (half on edges, quarter at corners)."""
        return np.outer(node_weights(self.nx, self.hx), node_weights(self.ny, self.hy))

    @cached_property
    def restriction(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.ones(self.n_interior), (np.arange(self.n_interior), self.interior_index)),
            shape=(self.n_interior, self.n_nodes),
        )

    @cached_property
    def grad_x(self) -> sp.csr_matrix:
        """Bilinear x-derivative at cell centres from nodal values."""
        return sp.kron(_node_diff(self.nx, self.hx), _average(self.ny), format="csr")

    @cached_property
    def grad_y(self) -> sp.csr_matrix:
        return sp.kron(_average(self.nx), _node_diff(self.ny, self.hy), format="csr")

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Nodal Laplacian on all nodes from interior unknowns; clamped ghosts reflect w_-1 = w_1."""
        def second(n, h):
            rows = np.arange(n - 1)
            d = sp.diags([np.ones(n - 2), -2 * np.ones(n - 1), np.ones(n - 2)], [-1, 0, 1]) / h**2
            d = sp.vstack([sp.csr_matrix(([2.0 / h**2], ([0], [0])), shape=(1, n - 1)),
                           d,
                           sp.csr_matrix(([2.0 / h**2], ([0], [n - 2])), shape=(1, n - 1))])
            embed = sp.csr_matrix((np.ones(n - 1), (rows + 1, rows)), shape=(n + 1, n - 1))
            return d.tocsr(), embed
        dxx, ex = second(self.nx, self.hx)
        dyy, ey = second(self.ny, self.hy)
        return (sp.kron(dxx, ey) + sp.kron(ex, dyy)).tocsr()

    @cached_property
    def bending_stiffness(self) -> sp.csc_matrix:
        """Hessian of the discrete bending energy 1/2 sum W (lap w)^2 over interior unknowns."""
        lap = self.laplacian
        return (lap.T @ sp.diags(self.weights.ravel()) @ lap).tocsc()

    def interior(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)[self.interior_mask]

    def scatter(self, interior_values: np.ndarray) -> np.ndarray:
        full = np.zeros(self.shape)
        full[self.interior_mask] = interior_values
        return full

    def mean(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values) / self.geometry.area)


def build_grids(geometry: BoxGeometry) -> Tuple[FluidGrid, PlateGrid]:
    """Builds the fluid and plate grids of one geometry.

    Args:
        geometry (BoxGeometry): Validated box geometry.

    Returns:
        Tuple[FluidGrid, PlateGrid]: Grids whose plate nodes are the vertices of the fluid top face.
    """
    fluid, plate = FluidGrid(geometry), PlateGrid(geometry)
    logger.debug("Built %r and %r", fluid, plate)
    return fluid, plate


def _components(v) -> Velocity:
    if isinstance(v, tuple):
        return v
    return v.v1, v.v2, v.v3

def discrete_div(v: Union[Velocity, "FluidField"], grid: FluidGrid) -> np.ndarray:
    """Conservative cell divergence of staggered velocity arrays."""
    v1, v2, v3 = _components(v)
    return (
        (v1[1:] - v1[:-1]) / grid.hx
        + (v2[:, 1:] - v2[:, :-1]) / grid.hy
        + (v3[:, :, 1:] - v3[:, :, :-1]) / grid.hz
    )

def discrete_grad_p(p: np.ndarray, grid: FluidGrid) -> Velocity:
    """Pressure gradient on interior faces; boundary faces carry zero."""
    g1 = np.zeros(grid.face_shapes[0])
    g2 = np.zeros(grid.face_shapes[1])
    g3 = np.zeros(grid.face_shapes[2])
    g1[1:-1] = (p[1:] - p[:-1]) / grid.hx
    g2[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / grid.hy
    g3[:, :, 1:-1] = (p[:, :, 1:] - p[:, :, :-1]) / grid.hz
    return g1, g2, g3

def vector_laplacian(v: "FluidField", grid: FluidGrid) -> Velocity:
    """Componentwise 7-point Laplacian on interior faces, with no-slip walls and the top-face data."""
    ext = grid.extend(v.v1, v.v2, v.v3, v.top)
    lap = np.zeros(grid.ext_size)
    lap[grid.interior_index] = -(grid.gradient_form @ ext)[grid.interior_index] / grid.cell_volume
    return grid.restrict(lap)


def fill_ghosts(w: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Pads a nodal plate field with two ghost rows by even reflection.

    With `clamp` the boundary ring is zeroed first, so the padded field has w = 0 and a vanishing
    centred normal derivative on the ring. Corner ghosts reflect across both edges; the two edge
    extrapolations coincide there.
    """
    values = np.array(w, dtype=float)
    if clamp:
        values[0, :] = values[-1, :] = 0.0
        values[:, 0] = values[:, -1] = 0.0
    return np.pad(values, 2, mode="reflect")

def biharmonic(w: np.ndarray, grid: PlateGrid) -> np.ndarray:
    """13-point biharmonic on the plate interior with clamped ghosts; zero on the ring."""
    a = fill_ghosts(w)
    hx4, hy4, hxy = grid.hx**4, grid.hy**4, grid.hx**2 * grid.hy**2
    nx, ny = grid.nx, grid.ny

    def at(di: int, dj: int) -> np.ndarray:
        return a[3 + di:nx + 2 + di, 3 + dj:ny + 2 + dj]

    dxxxx = at(-2, 0) - 4 * at(-1, 0) + 6 * at(0, 0) - 4 * at(1, 0) + at(2, 0)
    dyyyy = at(0, -2) - 4 * at(0, -1) + 6 * at(0, 0) - 4 * at(0, 1) + at(0, 2)
    dxxyy = (
        at(-1, -1) + at(1, -1) + at(-1, 1) + at(1, 1)
        - 2 * (at(0, -1) + at(0, 1) + at(-1, 0) + at(1, 0))
        + 4 * at(0, 0)
    )
    out = np.zeros(grid.shape)
    out[1:-1, 1:-1] = dxxxx / hx4 + 2 * dxxyy / hxy + dyyyy / hy4
    return out


@dataclass(frozen=True)
class SobolevNorms:
    l2: float
    h1: float
    h2: float = float("nan")

@dataclass(frozen=True)
class PlateNorms:
    w: SobolevNorms
    u1: SobolevNorms
    u2: SobolevNorms
    velocity_l2: float

def scalar_plate_norms(values: np.ndarray, grid: PlateGrid) -> SobolevNorms:
    """Trapezoid L2, cell-gradient H1 and second-difference H2 norms of a nodal field."""
    f = np.asarray(values, dtype=float)
    l2_sq = float(np.sum(grid.weights * f**2))
    flat = f.ravel()
    gx, gy = grid.grad_x @ flat, grid.grad_y @ flat
    h1_sq = l2_sq + grid.node_area * float(gx @ gx + gy @ gy)
    a = fill_ghosts(f, clamp=False)
    dxx = (a[1:-3, 2:-2] - 2 * a[2:-2, 2:-2] + a[3:-1, 2:-2]) / grid.hx**2
    dyy = (a[2:-2, 1:-3] - 2 * a[2:-2, 2:-2] + a[2:-2, 3:-1]) / grid.hy**2
    dxy = (f[1:, 1:] - f[1:, :-1] - f[:-1, 1:] + f[:-1, :-1]) / grid.node_area
    h2_sq = h1_sq + float(np.sum(grid.weights * (dxx**2 + dyy**2))) + 2 * grid.node_area * float(np.sum(dxy**2))
    return SobolevNorms(np.sqrt(l2_sq), np.sqrt(h1_sq), np.sqrt(h2_sq))

def plate_norms(u, grid: PlateGrid) -> PlateNorms:
    speed_sq = sum(float(np.sum(grid.weights * c**2)) for c in (u.wt, u.u1t, u.u2t))
    return PlateNorms(
        w=scalar_plate_norms(u.w, grid),
        u1=scalar_plate_norms(u.u1, grid),
        u2=scalar_plate_norms(u.u2, grid),
        velocity_l2=np.sqrt(speed_sq),
    )

def fluid_norms(v: "FluidField", grid: FluidGrid) -> SobolevNorms:
    ext = grid.extend(v.v1, v.v2, v.v3, v.top)
    interior = ext[grid.interior_index]
    l2_sq = grid.cell_volume * float(interior @ interior)
    h1_sq = l2_sq + float(ext @ (grid.gradient_form @ ext))
    return SobolevNorms(np.sqrt(l2_sq), np.sqrt(h1_sq))


@dataclass(frozen=True)
class TopFaceData:
    """Fluid boundary data on the top face: nodal plate velocities and their MAC interpolation."""
    top: np.ndarray
    values: np.ndarray

def lift_to_topface(b: np.ndarray, grid: FluidGrid) -> TopFaceData:
    nodal = np.asarray(b, dtype=float)
    if nodal.shape != (3, grid.nx + 1, grid.ny + 1):
        raise GridError(f"Plate vector field of shape {nodal.shape} does not match {grid!r}.")
    return TopFaceData(top=nodal.copy(), values=grid.top_interpolation @ nodal.ravel())

def trace_to_plate(v: Union["FluidField", TopFaceData], grid: PlateGrid) -> np.ndarray:
    top = np.asarray(v.top)
    if top.shape != (3,) + grid.shape:
        raise GridError(f"Top-face trace of shape {top.shape} does not match {grid!r}.")
    return top.copy()
