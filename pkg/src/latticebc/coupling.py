"""Atomistic-to-continuum coupling on a graded hexagonal mesh.

The mesh is the lattice triangulation of the hexagon of side ``K + 2`` (which
contains the defect), followed by hexagonal rings whose spacing grows like
``(R / K) ** beta`` until the side reaches ``K ** 2``.

Sites with hexagonal distance ``<= K`` are atomistic, the ring ``K + 1`` is the
interface.  A lattice triangle all of whose vertices lie in the hexagon
``K + 1`` is *atomistic*: its share of energy is carried by the site
potentials, every other triangle carries the Cauchy-Born energy of its full
area.  Interface sites use the weighted site potential with bond weights equal
to the fraction of the two triangles adjacent to the bond that are atomistic
and site weight equal to the fraction of atomistic triangles around the site.
Under the identity deformation every bond and every site is then split
exactly between the atomistic and continuum energies, so the coupled
functional has no ghost forces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .energy import EnergyModel, SiteGroup, lattice_group, point_base
from .lattice import CELL_AREA, LATTICE_MATRIX, NN_OFFSETS, NN_VECTORS, SQRT3, DefectSpec, Triangulation, build_hexagon
from .solver import minimize

DEFAULT_BETA = {"point": 1.5, "screw": 1.0}
_INV_A = np.linalg.inv(LATTICE_MATRIX)


def hexagon_side(points):
    """Real-valued hexagonal distance ``max(|i|, |j|, |i + j|)`` of positions."""
    ij = np.atleast_2d(points) @ _INV_A.T
    return np.max(np.abs(np.column_stack([ij[:, 0], ij[:, 1], ij.sum(axis=1)])), axis=1)


def _corners(R):
    return R * (NN_OFFSETS @ LATTICE_MATRIX.T)


def ring_parameter(points, R):
    """Position ``s in [0, 6)`` along the hexagon ring of side ``R``.

    Corner ``k`` sits at ``s = k``; the sides are parametrised linearly.
    """
    points = np.atleast_2d(points)
    c = _corners(R)
    theta = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2 * np.pi)
    k = np.clip(np.floor(theta / (np.pi / 3)).astype(int), 0, 5)
    t = np.linalg.norm(points - c[k], axis=1) / np.linalg.norm(c[(k + 1) % 6] - c[k], axis=1)
    s = k + t
    s[s > 6 - 1e-9] -= 6
    return s


def ring_points(R, n):
    """``6 n`` equispaced nodes on the hexagon ring of side ``R``."""
    c = _corners(R)
    t = np.arange(n) / n
    return np.concatenate([c[k] + t[:, None] * (c[(k + 1) % 6] - c[k]) for k in range(6)])


def grading(K, beta, start, stop):
    """Ring sides ``R_j`` and per-side segment counts of the graded region."""
    radii, counts = [], []
    R = float(start)
    while R < stop - 1e-9:
        h = max(1.0, (R / K) ** beta)
        nxt = R + h
        if nxt > stop - 0.5 * h:
            nxt = float(stop)
        radii.append(nxt)
        counts.append(max(1, int(round(nxt / max(1.0, (nxt / K) ** beta)))))
        R = nxt
    return np.array(radii), np.array(counts, dtype=int)


def stitch(inner, s_in, outer, s_out):
    """Triangulate the annulus between two closed rings by a merge walk."""
    a_order, b_order = np.argsort(s_in, kind="stable"), np.argsort(s_out, kind="stable")
    inner, s_in = np.asarray(inner)[a_order], np.asarray(s_in)[a_order]
    outer, s_out = np.asarray(outer)[b_order], np.asarray(s_out)[b_order]
    A, B = len(inner), len(outer)
    tris = []
    a = b = 0
    while a < A or b < B:
        na = s_in[a + 1] if a + 1 < A else 6.0 + s_in[0]
        nb = s_out[b + 1] if b + 1 < B else 6.0 + s_out[0]
        if b >= B or (a < A and na <= nb):
            tris.append((inner[a % A], outer[b % B], inner[(a + 1) % A]))
            a += 1
        else:
            tris.append((inner[a % A], outer[b % B], outer[(b + 1) % B]))
            b += 1
    return tris


@dataclass
class AcMesh:
    K: int
    beta: float
    lattice: object
    points: np.ndarray
    triangles: np.ndarray
    atomistic_sites: np.ndarray
    interface_sites: np.ndarray
    atomistic_triangles: np.ndarray
    v_eff: np.ndarray
    boundary: np.ndarray
    outer_side: float
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    _tri: object = field(default=None, repr=False)
    _tree: object = field(default=None, repr=False)

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def n_lattice(self):
        return len(self.lattice)

    @property
    def triangulation(self):
        if self._tri is None:
            self._tri = Triangulation(self.points, self.triangles)
        return self._tri

    @property
    def n_dofs(self):
        return int(np.sum(~self.boundary))

    def mesh_size(self):
        """Longest edge of every triangle."""
        p = self.points[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    def locate(self, points):
        """Containing triangle and barycentric coordinates, ``-1`` outside."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tri = self.triangulation
        if self._tree is None:
            self._tree = cKDTree(tri.centroids)
        found = np.full(len(points), -1, dtype=np.int64)
        bary = np.zeros((len(points), 3))
        # points beyond the outer hexagon are never inside a triangle
        pending = np.flatnonzero(hexagon_side(points) <= self.outer_side + 1e-9)
        for k in (8, 48, 256):
            if not len(pending):
                break
            k = min(k, len(tri))
            missed = []
            # chunked so the candidate arrays stay small
            for chunk in np.array_split(pending, max(1, len(pending) * k // 2_000_000 + 1)):
                _, cand = self._tree.query(points[chunk], k=k)
                cand = cand.reshape(len(chunk), k)
                p0 = tri.points[tri.triangles[cand, 0]]
                lam = np.einsum("pkja,pka->pkj", tri.shape_gradients[cand], points[chunk][:, None, :] - p0)
                lam[..., 0] += 1.0
                ok = np.all(lam >= -1e-9, axis=2)
                hit = ok.any(axis=1)
                first = np.argmax(ok, axis=1)
                rows = chunk[hit]
                found[rows] = cand[hit, first[hit]]
                bary[rows] = lam[hit, first[hit]]
                missed.append(chunk[~hit])
            pending = np.concatenate(missed)
        if len(pending):
            inside = hexagon_side(points[pending]) < self.outer_side - 1e-9
            if np.any(inside):
                raise RuntimeError(f"point location failed for {int(inside.sum())} interior points")
        return found, bary

    def interpolate(self, values, points):
        """P1 interpolant of nodal ``values`` at ``points``; zero outside the mesh."""
        values = np.asarray(values, dtype=float)
        flat = values.reshape(len(values), -1)
        found, bary = self.locate(points)
        out = np.zeros((len(bary), flat.shape[1]))
        hit = found >= 0
        nodes = self.triangles[found[hit]]
        out[hit] = np.einsum("pj,pjm->pm", bary[hit], flat[nodes])
        return out


def build_ac_mesh(K, beta=1.5, defect=None):
    """Graded coupling mesh around an atomistic hexagon of side ``K``."""
    if K < 2:
        raise ValueError("the atomistic region needs K >= 2")
    if not 0 < beta <= 2:
        raise ValueError("mesh grading exponent must lie in (0, 2]")
    defect = DefectSpec() if defect is None else defect
    R0 = K + 2
    lat = build_hexagon(R0, defect)
    hd = lat.hexdist
    outer = float(max(K * K, R0 + 1))
    radii, counts = grading(K, beta, R0, outer)
    pts = [lat.positions]
    tris = [lat.triangles]
    ring_nodes = np.flatnonzero(hd == R0)
    ring_s = ring_parameter(lat.positions[ring_nodes], R0)
    offset = len(lat)
    for R, n in zip(radii, counts):
        new = ring_points(R, n)
        nodes = offset + np.arange(len(new))
        s_new = np.repeat(np.arange(6), n) + np.tile(np.arange(n) / n, 6)
        tris.append(np.array(stitch(ring_nodes, ring_s, nodes, s_new), dtype=np.int64))
        pts.append(new)
        ring_nodes, ring_s = nodes, s_new
        offset += len(new)
    points = np.concatenate(pts)
    triangles = np.concatenate(tris)
    # counter-clockwise orientation
    p = points[triangles]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = det < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    boundary = np.zeros(len(points), dtype=bool)
    boundary[ring_nodes] = True

    node_hd = np.full(len(points), np.inf)
    node_hd[: len(lat)] = hd
    atomistic_tri = np.all(node_hd[triangles] <= K + 1, axis=1)
    mesh = AcMesh(
        K=K,
        beta=beta,
        lattice=lat,
        points=points,
        triangles=triangles,
        atomistic_sites=np.flatnonzero(hd <= K),
        interface_sites=np.flatnonzero(hd == K + 1),
        atomistic_triangles=atomistic_tri,
        v_eff=None,
        boundary=boundary,
        outer_side=outer,
        radii=np.concatenate([[R0], radii]),
    )
    mesh.v_eff = np.where(atomistic_tri, 0.0, mesh.triangulation.areas)
    return mesh


def interface_weights(mesh):
    """Bond weights ``(S, B)`` and site weights ``(S,)`` of the interface sites."""
    lat = mesh.lattice
    sites = mesh.interface_sites
    at = mesh.triangles[mesh.atomistic_triangles]
    edge_count = {}
    for t in at.tolist():
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            edge_count[key] = edge_count.get(key, 0) + 1
    site_count = np.bincount(at.ravel(), minlength=len(lat))
    from .energy import stencil_tables

    nbr, _, mask = stencil_tables(lat, sites)
    w = np.zeros(nbr.shape)
    for s, site in enumerate(sites.tolist()):
        for b in np.flatnonzero(mask[s]).tolist():
            n = int(nbr[s, b])
            w[s, b] = edge_count.get((min(site, n), max(site, n)), 0) / 2.0
    omega = site_count[sites] / 6.0
    return w, omega


def cauchy_born_group(potential, mesh, base_gradients):
    """Cauchy-Born energy of the continuum triangles as a site group.

    ``base_gradients`` holds the predictor gradient on each triangle, shape
    ``(ntri, m, 2)``.
    """
    tri = mesh.triangulation
    cb = np.flatnonzero(~mesh.atomistic_triangles)
    G = tri.shape_gradients[cb]
    coeff = np.einsum("ba,tja->tbj", NN_VECTORS, G)
    base = np.einsum("tma,ba->tbm", base_gradients[cb], NN_VECTORS)
    return SiteGroup(
        potential=potential,
        nodes=tri.triangles[cb],
        coeff=coeff,
        base=base,
        weights=np.ones((len(cb), 6)),
        omega=np.ones(len(cb)),
        scale=mesh.v_eff[cb] / CELL_AREA,
        labels=-1 - cb,
    )


def ac_model(problem, K, beta=None):
    """Mesh, coupled energy model and free-node mask."""
    if problem.is_screw and np.any(np.asarray(problem.shear) != 0.0):
        # the coupling is implemented for the pure screw only
        raise ValueError("coupling for the screw dislocation requires zero applied shear")
    if beta is None:
        beta = DEFAULT_BETA["screw" if problem.is_screw else "point"]
    mesh = build_ac_mesh(K, beta, problem.defect)
    lat = mesh.lattice
    base = problem.base(lat.positions)
    groups = [lattice_group(problem.potential, lat, mesh.atomistic_sites, base)]
    w, omega = interface_weights(mesh)
    groups.append(lattice_group(problem.potential, lat, mesh.interface_sites, base, weights=w, omega=omega))
    tri = mesh.triangulation
    m = problem.range_dim
    if problem.is_screw:
        nodal = problem.predictor.corrected_nodal(mesh.points, mesh.triangles)
        grads = np.einsum("tj,tja->ta", nodal, tri.shape_gradients)[:, None, :]
    else:
        grads = np.broadcast_to(np.eye(2), (len(tri), 2, 2))
    groups.append(cauchy_born_group(problem.potential, mesh, grads))
    model = EnergyModel(mesh.n_nodes, m, groups)
    return mesh, model, ~mesh.boundary


def ghost_force(K=6, beta=1.5, potential=None):
    """Largest force of the coupled functional on the undefected lattice at u = 0."""
    from .schemes import Problem

    problem = Problem(DefectSpec("none"), potential=potential)
    _, model, free = ac_model(problem, K, beta)
    g = model.gradient(np.zeros(model.shape))
    return float(np.max(np.abs(g[free])))


def solve_ac(problem, K, beta=None, u0=None):
    """Minimise the coupled energy over P1 fields vanishing on the outer ring."""
    from .schemes import Solution, _free_dofs
    from .solver import laplacian_preconditioner

    mesh, model, free = ac_model(problem, K, beta)
    m = problem.range_dim
    L = mesh.triangulation.stiffness(2 * SQRT3 * problem.bond_stiffness())
    idx = np.flatnonzero(free)
    Lf = L[idx][:, idx]
    if m > 1:
        from scipy import sparse

        Lf = sparse.kron(Lf, sparse.identity(m), format="csc")
    x0 = np.zeros(model.shape) if u0 is None else np.array(u0, dtype=float).reshape(model.shape)
    u, report = minimize(
        model.energy_and_gradient,
        x0,
        free=_free_dofs(free, m),
        precond=laplacian_preconditioner(Lf),
        tol=problem.tol,
        max_iter=problem.max_iter,
        max_step=None if problem.is_screw else 0.25,
    )
    sol = Solution("ac", K, mesh.points, u, report.energy, report, len(mesh.atomistic_sites), mesh=mesh)
    sol.extra["dofs"] = mesh.n_dofs
    sol.extra["beta"] = mesh.beta
    return sol
