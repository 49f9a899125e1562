import numpy as np
import pytest

from latticebc.coupling import ac_model, build_ac_mesh, ghost_force, interface_weights
from latticebc.harness import geometry_error
from latticebc.lattice import CELL_AREA, DefectSpec
from latticebc.potentials import PairFunctional
from latticebc.schemes import (
    Problem,
    dir_model,
    lin_model,
    lin_outer,
    make_problem,
    per_model,
    solve_ac,
    solve_dir,
    solve_lin,
    solve_per,
)


class HarmonicBonds(PairFunctional):
    """``V(g) = sum |g_rho|^2 / 2``: exactly quadratic in the displacement."""

    range_dim = 2

    def phi(self, r):
        return 0.5 * r**2, r, np.ones_like(r)

    def psi(self, r):
        z = np.zeros_like(r)
        return z, z, z

    def embed(self, s):
        z = np.zeros_like(s)
        return z, z, z


def hexagon_area(side):
    return 1.5 * np.sqrt(3) * side**2


@pytest.fixture(scope="module")
def vacancy():
    return make_problem("vacancy", tol=1e-9)


def test_dir_geometry_error_rate_in_K(vacancy):
    ref = solve_dir(vacancy, 96)
    Ks = np.array([8, 16, 32])
    errs = [geometry_error(solve_dir(vacancy, K), ref) for K in Ks]
    slope = np.polyfit(np.log(Ks), np.log(errs), 1)[0]
    assert errs[0] > errs[1] > errs[2]
    assert -1.3 <= slope <= -0.7


def test_dir_rejects_empty_domain(vacancy):
    with pytest.raises(ValueError):
        solve_dir(vacancy, 0)


def test_per_undefected_forces_vanish():
    _, model, free = per_model(Problem(DefectSpec("none")), 6)
    g = model.gradient(np.zeros(model.shape))
    assert np.max(np.abs(g)) <= 1e-12


def test_per_cell_and_screw_rejected(vacancy):
    sol = solve_per(vacancy, 5)
    assert sol.n_inner == 11 * 11 - 1
    assert sol.report.converged
    with pytest.raises(ValueError):
        solve_per(make_problem("screw", test=1), 5)


def test_lin_matches_dir_for_quadratic_potential():
    problem = Problem(DefectSpec("vacancy"), potential=HarmonicBonds(), tol=1e-10)
    outer = 14
    full = solve_dir(problem, outer)
    lin = solve_lin(problem, 4, outer=outer)
    assert np.array_equal(full.lattice.coords, lin.lattice.coords)
    assert np.max(np.abs(full.values - lin.values)) <= 1e-8
    assert lin.energy == pytest.approx(full.energy, abs=1e-10)


def test_lin_outer_default_and_validation(vacancy):
    assert lin_outer(2) == 8
    assert lin_outer(42) == 252
    assert lin_outer(36) == 216
    with pytest.raises(ValueError):
        solve_lin(vacancy, 5, outer=5)


def test_lin_more_accurate_than_dir(vacancy):
    ref = solve_dir(vacancy, 100)
    e_dir = geometry_error(solve_dir(vacancy, 16), ref)
    e_lin = geometry_error(solve_lin(vacancy, 16, outer=100), ref)
    assert e_dir >= e_lin


# -- coupling mesh ----------------------------------------------------------------


def test_ac_mesh_dofs_bounded():
    for K in (4, 8, 16, 32):
        # at the rate-optimal grading the count is O(K^2)
        assert build_ac_mesh(K, 1.5).n_dofs <= 12 * K**2
        # uniform-ratio grading adds one factor log K
        n = build_ac_mesh(K, 1.0).n_dofs
        assert n <= 25 * K**2
        assert n <= 10 * K**2 * np.log(K)


def test_ac_innermost_layer_is_lattice():
    K = 6
    mesh = build_ac_mesh(K, 1.5)
    hd = np.full(mesh.n_nodes, np.inf)
    hd[: mesh.n_lattice] = mesh.lattice.hexdist
    inner = np.all(hd[mesh.triangles] <= K + 2, axis=1)
    assert np.allclose(mesh.mesh_size()[inner], 1.0)
    assert np.allclose(mesh.points[: mesh.n_lattice], mesh.lattice.positions)


def test_ac_mesh_conforms_and_tiles():
    for K, beta in ((4, 1.0), (6, 1.5), (5, 2.0)):
        mesh = build_ac_mesh(K, beta)
        areas = mesh.triangulation.areas
        assert areas.min() > 0
        assert areas.sum() == pytest.approx(hexagon_area(mesh.outer_side), rel=1e-12)
        assert np.all(mesh.v_eff[~mesh.atomistic_triangles] == areas[~mesh.atomistic_triangles])
        assert np.all(mesh.v_eff[mesh.atomistic_triangles] == 0)
        w, omega = interface_weights(mesh)
        n_atom = len(mesh.atomistic_sites)
        covered = mesh.v_eff.sum() + (n_atom + omega.sum()) * CELL_AREA
        assert covered == pytest.approx(areas.sum(), rel=1e-12)
        assert np.all((omega > 0) & (omega < 1))
        assert np.all((w >= 0) & (w <= 1))


def test_ac_mesh_grading():
    for beta in (1.0, 1.5, 2.0):
        for K in (4, 8, 16):
            mesh = build_ac_mesh(K, beta)
            r = np.linalg.norm(mesh.triangulation.centroids, axis=1)
            h = mesh.mesh_size()
            assert np.all(h <= 3.0 * np.maximum(1.0, (r / K) ** beta))
    with pytest.raises(ValueError):
        build_ac_mesh(4, 2.5)
    with pytest.raises(ValueError):
        build_ac_mesh(1, 1.5)


def test_ac_zero_energy_at_predictor():
    for problem in (make_problem("vacancy"), make_problem("screw", test=1)):
        _, model, _ = ac_model(problem, 4)
        assert model.energy(np.zeros(model.shape)) == 0.0


@pytest.mark.parametrize("beta", [1.0, 1.5, 2.0])
def test_ac_no_ghost_forces(beta):
    assert ghost_force(K=6, beta=beta) <= 1e-10


def test_ac_screw_with_shear_rejected():
    with pytest.raises(ValueError):
        ac_model(make_problem("screw", test=3), 4)


def test_ac_converges_to_itself(vacancy):
    ref = solve_ac(vacancy, 24)
    errs = [geometry_error(solve_ac(vacancy, K), ref) for K in (4, 8, 12)]
    assert errs[0] > errs[1] > errs[2]
    sol = solve_ac(vacancy, 6)
    assert sol.n_inner == 3 * 36 + 3 * 6 + 1 - 1
    assert sol.extra["dofs"] == sol.mesh.n_dofs


def test_lin_exterior_remainder_rate():
    # the linearised energy error is minus the anharmonic remainder of the
    # exterior sites; its unsigned sum decays like N^-2
    problem = make_problem("vacancy", tol=1e-10)
    outer = 120
    ref = solve_dir(problem, outer)
    lat, model, _ = dir_model(problem, outer)
    _, lin, _ = lin_model(problem, 1, outer)
    nonlinear, quadratic = model.groups[0], lin.groups[1]
    rem = np.zeros(len(lat))
    rem[nonlinear.nodes[:, 0]] += nonlinear.energies(ref.values)
    rem[quadratic.nodes[:, 0]] -= quadratic.energies(ref.values)
    Ks = np.array([6, 9, 13, 19, 28])
    N = 3 * Ks * (Ks + 1)
    unsigned = [np.abs(rem[lat.hexdist > K]).sum() for K in Ks]
    assert np.polyfit(np.log(N), np.log(unsigned), 1)[0] == pytest.approx(-2.0, abs=0.2)
    sol = solve_lin(problem, 9, outer=outer)
    assert sol.energy - ref.energy == pytest.approx(-rem[lat.hexdist > 9].sum(), rel=0.01)
