import numpy as np
import pytest

from fsilab.constants import SolverKind, TractionStencil
from fsilab.engine.grid import BoxGeometry, build_grids
from fsilab.engine.manufactured import stokes_solution
from fsilab.engine.stokes import (
    FluidField, StokesWorkspace, check_compatibility, divergence_max, fluid_substep, lifting_N0, momentum_residual,
    project_divergence_free, solve_stokes, traction_Tf,
)
from fsilab.exceptions import CompatibilityError

GEOMETRY = BoxGeometry(lx=1.0, ly=1.0, depth=1.0, nx=8, ny=8, nz=4)

def _tangential_psi(pg, seed=0):
    rng = np.random.default_rng(seed)
    psi = np.zeros((3,) + pg.shape)
    psi[0] = pg.scatter(rng.standard_normal(pg.n_interior))
    psi[1] = pg.scatter(rng.standard_normal(pg.n_interior))
    return psi

def test_zero_data_gives_zero_solution():
    fg, pg = build_grids(GEOMETRY)
    ws = StokesWorkspace(fg, nu=1.0)
    vf = solve_stokes(None, np.zeros((3,) + pg.shape), ws)
    for component in vf.velocity:
        assert np.max(np.abs(component)) < 1e-12
    assert np.max(np.abs(vf.p)) < 1e-12

def test_net_flux_is_rejected():
    fg, pg = build_grids(GEOMETRY)
    psi = np.zeros((3,) + pg.shape)
    psi[2] = 1.0
    with pytest.raises(CompatibilityError, match="net volume flux"):
        check_compatibility(psi, fg)
    with pytest.raises(CompatibilityError):
        solve_stokes(None, psi, StokesWorkspace(fg, nu=1.0))

def test_lifting_is_divergence_free_and_linear():
    fg, pg = build_grids(GEOMETRY)
    ws = StokesWorkspace(fg, nu=0.7)
    psi = _tangential_psi(pg)
    single = lifting_N0(psi, ws)
    double = lifting_N0(2.0 * psi, ws)
    assert divergence_max(single, fg) < 1e-9
    np.testing.assert_allclose(double.interior(fg), 2.0 * single.interior(fg), atol=1e-9)
    assert abs(single.p.mean()) < 1e-12

def test_consistent_traction_pairs_to_dissipation():
    fg, pg = build_grids(GEOMETRY)
    nu = 0.7
    ws = StokesWorkspace(fg, nu=nu)
    psi = _tangential_psi(pg, seed=4)
    vf = lifting_N0(psi, ws)
    traction = traction_Tf(vf, ws, TractionStencil.CONSISTENT)
    ext = vf.extended(fg)
    boundary_power = pg.node_area * float(np.sum(traction * psi))
    dissipation = nu * float(ext @ (fg.strain_form @ ext))
    assert boundary_power == pytest.approx(dissipation, rel=1e-8)

def test_uzawa_matches_direct():
    fg, pg = build_grids(GEOMETRY)
    exact = stokes_solution(1.0, 1.0, 1.0, 1.0)
    psi = exact.top_velocity(pg)
    g = exact.sample_forcing(fg)
    direct = solve_stokes(g, psi, StokesWorkspace(fg, nu=1.0, solver=SolverKind.DIRECT))
    uzawa = solve_stokes(g, psi, StokesWorkspace(fg, nu=1.0, solver=SolverKind.UZAWA, tol=1e-9))
    assert np.max(np.abs(direct.interior(fg) - uzawa.interior(fg))) < 1e-5

def test_manufactured_velocity_error_drops_under_refinement():
    exact = stokes_solution(1.0, 1.0, 1.0, 1.0)
    errors = []
    for n in (8, 16):
        fg, pg = build_grids(GEOMETRY.model_copy(update={"nx": n, "ny": n, "nz": n}))
        vf = solve_stokes(exact.sample_forcing(fg), exact.top_velocity(pg), StokesWorkspace(fg, nu=1.0))
        reference = fg.extend(*exact.sample_velocity(fg), exact.top_velocity(pg))[fg.interior_index]
        diff = vf.interior(fg) - reference
        errors.append(np.sqrt(fg.cell_volume * diff @ diff))
    assert errors[0] / errors[1] > 2.5

def test_steady_solve_requires_steady_workspace():
    fg, pg = build_grids(GEOMETRY)
    with pytest.raises(ValueError, match="steady workspace"):
        solve_stokes(None, np.zeros((3,) + pg.shape), StokesWorkspace(fg, nu=1.0, dt=0.1))

def test_fluid_substep_checks_dt():
    fg, pg = build_grids(GEOMETRY)
    ws = StokesWorkspace(fg, nu=1.0, dt=0.1)
    with pytest.raises(ValueError, match="factorized"):
        fluid_substep(FluidField.zeros(fg), np.zeros((3,) + pg.shape), None, 0.2, ws)

def test_unsteady_step_decays_kinetic_energy():
    fg, pg = build_grids(GEOMETRY)
    steady = StokesWorkspace(fg, nu=1.0)
    rng = np.random.default_rng(5)
    raw = [rng.standard_normal(s) for s in fg.face_shapes]
    v1, v2, v3 = project_divergence_free(*raw, steady)
    old = FluidField(v1, v2, v3, p=np.zeros(fg.cell_shape), top=np.zeros((3,) + pg.shape))
    new = fluid_substep(old, np.zeros((3,) + pg.shape), None, 0.1, StokesWorkspace(fg, nu=1.0, dt=0.1))
    before, after = old.interior(fg), new.interior(fg)
    assert after @ after < before @ before
    assert divergence_max(new, fg) < 1e-9

def test_leray_projection_is_divergence_free():
    fg, pg = build_grids(GEOMETRY)
    ws = StokesWorkspace(fg, nu=1.0)
    rng = np.random.default_rng(6)
    v = project_divergence_free(*(rng.standard_normal(s) for s in fg.face_shapes), ws)
    field = FluidField(*v, p=np.zeros(fg.cell_shape), top=np.zeros((3,) + pg.shape))
    assert divergence_max(field, fg) < 1e-9

def test_hydrostatic_forcing_is_balanced_by_pressure():
    fg, pg = build_grids(GEOMETRY)
    g = (np.zeros(fg.face_shapes[0]), np.zeros(fg.face_shapes[1]), -np.ones(fg.face_shapes[2]))
    vf = solve_stokes(g, np.zeros((3,) + pg.shape), StokesWorkspace(fg, nu=1.0))
    for component in vf.velocity:
        assert np.max(np.abs(component)) < 1e-10
    z = fg.cell_coords()[2]
    np.testing.assert_allclose(vf.p, -(z - z.mean()), atol=1e-10)
    assert momentum_residual(vf, g, 1.0, fg) < 1e-8

def test_one_sided_traction_of_quadratic_shear():
    fg, pg = build_grids(GEOMETRY)
    slope = 0.7
    z = fg.face_coords(0)[2]
    vf = FluidField(
        z**2 + slope * z, np.zeros(fg.face_shapes[1]), np.zeros(fg.face_shapes[2]),
        p=np.zeros(fg.cell_shape), top=np.zeros((3,) + pg.shape),
    )
    traction = traction_Tf(vf, StokesWorkspace(fg, nu=1.0), TractionStencil.ONE_SIDED)
    np.testing.assert_allclose(traction[0][1:-1, 1:-1], slope, rtol=1e-10)
    np.testing.assert_allclose(traction[1:], 0.0, atol=1e-12)

def test_direct_solve_leaves_small_momentum_residual():
    fg, pg = build_grids(GEOMETRY)
    exact = stokes_solution(1.0, 1.0, 1.0, 1.0)
    g = exact.sample_forcing(fg)
    vf = solve_stokes(g, exact.top_velocity(pg), StokesWorkspace(fg, nu=1.0, solver=SolverKind.DIRECT))
    assert momentum_residual(vf, g, 1.0, fg) < 1e-8

def test_unsteady_step_leaves_small_momentum_residual():
    fg, pg = build_grids(GEOMETRY)
    rng = np.random.default_rng(7)
    v1, v2, v3 = project_divergence_free(*(rng.standard_normal(s) for s in fg.face_shapes), StokesWorkspace(fg, nu=1.0))
    old = FluidField(v1, v2, v3, p=np.zeros(fg.cell_shape), top=np.zeros((3,) + pg.shape))
    new = fluid_substep(old, np.zeros((3,) + pg.shape), None, 0.1, StokesWorkspace(fg, nu=1.0, dt=0.1))
    assert momentum_residual(new, None, 1.0, fg, v_old=old, dt=0.1) < 1e-8
    assert momentum_residual(new, None, 1.0, fg) > 1e-3

def test_long_substep_reaches_steady_solution():
    fg, pg = build_grids(GEOMETRY)
    exact = stokes_solution(1.0, 1.0, 1.0, 1.0)
    g, psi = exact.sample_forcing(fg), exact.top_velocity(pg)
    steady = solve_stokes(g, psi, StokesWorkspace(fg, nu=1.0))
    step = fluid_substep(FluidField.zeros(fg), psi, g, 1e8, StokesWorkspace(fg, nu=1.0, dt=1e8))
    np.testing.assert_allclose(step.interior(fg), steady.interior(fg), atol=1e-6)
    np.testing.assert_allclose(step.p, steady.p, atol=1e-6)
