"""Approximate equilibria under artificial boundary conditions.

``solve_dir``  zero displacement outside a hexagon of side ``K``;
``solve_per``  periodic cell around the defect (point defects only);
``solve_lin``  nonlinear inside the hexagon, linearised lattice outside, on a
               larger hexagon with zero displacement beyond;
``solve_ac``   atomistic core coupled to a Cauchy-Born finite element
               continuum (see :mod:`latticebc.coupling`).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .energy import EnergyModel, QuadraticGroup, lattice_group, point_base, reference_stencil, screw_base, stencil_tables
from .lattice import DefectSpec, build_hexagon, build_periodic_cell
from .potentials import AntiplanePotential, EamPotential
from .predictors import ScrewPredictor
from .solver import laplacian_preconditioner, minimize

TEST_CORES = {
    1: (1.0 / 3.0, 0.5 / np.sqrt(3.0)),
    2: (0.5, 0.5 / np.sqrt(3.0)),
    3: (0.5, 0.5 / np.sqrt(3.0)),
}
TEST_SHEARS = {1: (0.0, 0.0), 2: (0.0, 0.0), 3: (1e-3, 3e-4)}


@dataclass(frozen=True)
class Problem:
    """A defect, its site potential and far-field predictor, and solver settings."""

    defect: DefectSpec
    shear: tuple[float, float] = (0.0, 0.0)
    potential: object = None
    tol: float = 1e-7
    max_iter: int = 5000

    def __post_init__(self):
        if self.potential is None:
            pot = AntiplanePotential() if self.defect.kind == "screw" else EamPotential()
            object.__setattr__(self, "potential", pot)

    @property
    def range_dim(self):
        return self.defect.range_dim

    @property
    def predictor(self):
        if self.defect.kind != "screw":
            return None
        return ScrewPredictor(tuple(self.defect.core), tuple(self.shear))

    @property
    def is_screw(self):
        return self.defect.kind == "screw"

    def base(self, positions):
        if self.is_screw:
            return screw_base(self.predictor, positions)
        return point_base(self.potential)

    def bond_stiffness(self):
        """Longitudinal stiffness of one bond in the homogeneous stencil."""
        g = reference_stencil(self.range_dim, self.shear)
        hb = self.potential.hessian(g if self.range_dim == 2 else g[:, 0])
        if self.range_dim == 1:
            return float(hb[0, 0])
        return float(g[0] @ hb[0, 0] @ g[0])


def make_problem(defect, core=None, shear=None, test=None, tol=1e-7, max_iter=5000):
    """Convenience constructor; ``test`` selects one of the three screw setups."""
    if defect == "screw":
        test = 1 if test is None and core is None else test
        core = TEST_CORES[test] if core is None else tuple(core)
        shear = TEST_SHEARS.get(test, (0.0, 0.0)) if shear is None else tuple(shear)
        return Problem(DefectSpec("screw", tuple(core)), tuple(shear), tol=tol, max_iter=max_iter)
    return Problem(DefectSpec(defect), tol=tol, max_iter=max_iter)


@dataclass
class Solution:
    scheme: str
    K: int
    points: np.ndarray
    values: np.ndarray
    energy: float
    report: object
    n_inner: int
    lattice: object = None
    mesh: object = None
    extra: dict = field(default_factory=dict)

    def sample(self, points):
        """Displacement at ``points``; zero where the scheme has no value."""
        points = np.atleast_2d(points)
        if self.mesh is not None:
            return self.mesh.interpolate(self.values, points)
        idx = self.lattice.indices_of(points)
        out = np.zeros((len(points), self.values.shape[1]))
        hit = idx >= 0
        out[hit] = self.values[idx[hit]]
        return out


def graph_laplacian(n, owner, nbr, weight):
    """``sum over directed bonds of weight (e_i - e_j)(e_i - e_j)^T / 2``."""
    w = np.full(len(owner), 0.5 * weight)
    A = sparse.csr_matrix((w, (owner, nbr)), shape=(n, n))
    A = A + A.T
    return sparse.diags(np.asarray(A.sum(axis=1)).ravel()) - A


def _free_dofs(free_nodes, m):
    return np.repeat(free_nodes, m)


def _restricted_preconditioner(L, free_nodes, m):
    idx = np.flatnonzero(free_nodes)
    Lf = L[idx][:, idx]
    if m > 1:
        Lf = sparse.kron(Lf, sparse.identity(m), format="csc")
    return laplacian_preconditioner(Lf)


def _run(problem, model, free_nodes, precond, u0=None):
    m = problem.range_dim
    x0 = np.zeros(model.shape) if u0 is None else np.array(u0, dtype=float).reshape(model.shape)
    u, report = minimize(
        model.energy_and_gradient,
        x0,
        free=_free_dofs(free_nodes, m),
        precond=precond,
        tol=problem.tol,
        max_iter=problem.max_iter,
        max_step=None if problem.is_screw else 0.25,
    )
    return u, report


def dir_model(problem, K, pad=2):
    """Lattice, energy model and free mask of the truncated problem."""
    lat = build_hexagon(K + pad, problem.defect)
    sites = np.flatnonzero(lat.complete)
    group = lattice_group(problem.potential, lat, sites, problem.base(lat.positions))
    model = EnergyModel(len(lat), problem.range_dim, [group])
    free = lat.hexdist <= K
    return lat, model, free


def solve_dir(problem, K, u0=None):
    """Minimise the energy over displacements vanishing outside hexagon ``K``."""
    if K < 1:
        raise ValueError("K must be at least 1")
    lat, model, free = dir_model(problem, K)
    L = graph_laplacian(len(lat), lat.owner, lat.nbr, problem.bond_stiffness())
    u, report = _run(problem, model, free, _restricted_preconditioner(L, free, problem.range_dim), u0)
    return Solution("dir", K, lat.positions, u, report.energy, report, int(free.sum()), lattice=lat)


def per_model(problem, K):
    lat = build_periodic_cell(K, problem.defect)
    sites = np.arange(len(lat))
    group = lattice_group(problem.potential, lat, sites, point_base(problem.potential))
    model = EnergyModel(len(lat), problem.range_dim, [group])
    free = np.ones(len(lat), dtype=bool)
    # translations are a symmetry of the cell: pin the corner site
    free[np.flatnonzero((lat.coords[:, 0] == -K) & (lat.coords[:, 1] == -K))[0]] = False
    return lat, model, free


def solve_per(problem, K, u0=None):
    """Minimise the periodic energy on the cell ``|i|, |j| <= K``."""
    if problem.is_screw:
        raise ValueError("periodic boundary conditions are not available for dislocations")
    lat, model, free = per_model(problem, K)
    L = graph_laplacian(len(lat), lat.owner, lat.nbr, problem.bond_stiffness())
    u, report = _run(problem, model, free, _restricted_preconditioner(L, free, problem.range_dim), u0)
    return Solution("per", K, lat.positions, u, report.energy, report, len(lat), lattice=lat)


def lin_outer(K, cap=None):
    """Default outer hexagon side for the linearised exterior."""
    cap = max(200, 6 * K) if cap is None else cap
    return int(min(K**3, cap))


def lin_model(problem, K, outer):
    lat = build_hexagon(outer + 2, problem.defect)
    hd = lat.hexdist
    inner = np.flatnonzero(lat.complete & (hd <= K))
    outer_sites = np.flatnonzero(lat.complete & (hd > K))
    groups = [lattice_group(problem.potential, lat, inner, problem.base(lat.positions))]
    groups.append(linear_exterior_group(problem, lat, outer_sites))
    model = EnergyModel(len(lat), problem.range_dim, groups)
    free = hd <= outer
    return lat, model, free


def linear_exterior_group(problem, lat, sites):
    """Quadratic expansion of the site energy about the homogeneous state."""
    m = problem.range_dim
    nbr, rho, mask = stencil_tables(lat, sites)
    if not np.all(mask) or mask.shape[1] != 6:
        raise ValueError("linearised sites must carry the full homogeneous stencil")
    g0 = reference_stencil(m, problem.shear)
    pot = problem.potential
    w, om = np.ones((1, 6)), np.ones(1)
    _, grad, hess = pot.derivatives(g0[None], w, om, hessian=True)
    A = hess[0].reshape(6 * m, 6 * m)
    lin = np.broadcast_to(grad[0].reshape(-1), (len(sites), 6 * m)).copy()
    if problem.is_screw:
        pos = lat.positions
        e0 = problem.predictor.elastic_bond_differences(pos[sites][:, None, :], pos[nbr])
        lin += (e0 - g0[:, 0]).reshape(len(sites), -1) @ A
    S = len(sites)
    coeff = np.zeros((S, 6, 7))
    coeff[:, :, 0] = -1.0
    coeff[:, np.arange(6), np.arange(6) + 1] = 1.0
    nodes = np.concatenate([sites[:, None], nbr], axis=1)
    return QuadraticGroup(nodes=nodes, coeff=coeff, lin=lin, matrix=A, scale=np.ones(S))


def solve_lin(problem, K, outer=None, u0=None):
    """Nonlinear core of side ``K`` with a linearised exterior up to ``outer``."""
    if K < 1:
        raise ValueError("K must be at least 1")
    outer = lin_outer(K) if outer is None else int(outer)
    if outer <= K:
        raise ValueError("outer hexagon must be larger than the core")
    lat, model, free = lin_model(problem, K, outer)
    L = graph_laplacian(len(lat), lat.owner, lat.nbr, problem.bond_stiffness())
    u, report = _run(problem, model, free, _restricted_preconditioner(L, free, problem.range_dim), u0)
    n_inner = int(np.sum(lat.hexdist <= K))
    sol = Solution("lin", K, lat.positions, u, report.energy, report, n_inner, lattice=lat)
    sol.extra["outer"] = outer
    return sol


def solve_ac(problem, K, beta=None, u0=None):
    from .coupling import solve_ac as _solve_ac

    return _solve_ac(problem, K, beta=beta, u0=u0)
