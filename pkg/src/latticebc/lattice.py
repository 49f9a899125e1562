"""Triangular reference lattice, defects, stencils and the background mesh.

Sites are addressed by integer lattice coordinates ``(i, j)`` with position
``i * e1 + j * a2`` where ``e1 = (1, 0)`` and ``a2 = (1/2, sqrt(3)/2)``.  The
hexagon of side ``K`` is the set ``max(|i|, |j|, |i + j|) <= K``; it is
flat-topped with corners at ``K * Q6^k e1``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

SQRT3 = np.sqrt(3.0)

#: columns are the lattice generators
LATTICE_MATRIX = np.array([[1.0, 0.5], [0.0, SQRT3 / 2]])
CELL_AREA = SQRT3 / 2

#: nearest-neighbour offsets in lattice coordinates, ordered as Q6^k e1
NN_OFFSETS = np.array([(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)])
NN_VECTORS = NN_OFFSETS @ LATTICE_MATRIX.T

INTERSTITIAL_POSITION = (0.5, 0.0)
BOND_RADIUS = 1.0 + 1e-6

DEFECT_KINDS = ("none", "vacancy", "interstitial", "screw")


@dataclass(frozen=True)
class DefectSpec:
    """Which defect to place at the origin.

    ``core`` is only used for the screw dislocation and must not be a lattice
    site.
    """

    kind: str = "none"
    core: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in DEFECT_KINDS:
            raise ValueError(f"unknown defect kind {self.kind!r}")
        if self.kind == "screw":
            if self.core is None:
                raise ValueError("screw dislocation needs a core position")
            x = np.asarray(self.core, dtype=float)
            ij = np.linalg.solve(LATTICE_MATRIX, x)
            if np.allclose(ij, np.round(ij), atol=1e-10):
                raise ValueError(f"dislocation core {tuple(x)} lies on a lattice site")

    @property
    def range_dim(self):
        return 1 if self.kind == "screw" else 2


def hex_distance(ij):
    ij = np.asarray(ij)
    i, j = ij[..., 0], ij[..., 1]
    return np.maximum(np.maximum(np.abs(i), np.abs(j)), np.abs(i + j))


def hexagon_coords(K):
    """Lattice coordinates of the hexagon of side ``K``, row by row."""
    rows = []
    for j in range(-K, K + 1):
        lo, hi = max(-K, -K - j), min(K, K - j)
        i = np.arange(lo, hi + 1)
        rows.append(np.column_stack([i, np.full_like(i, j)]))
    return np.concatenate(rows)


def site_key(x):
    """Integer key of a position: ``(round(2x), round(2y/sqrt3))``."""
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.rint(2 * x[..., 0]), np.rint(2 * x[..., 1] / SQRT3)]).astype(np.int64)


class Triangulation:
    """P1 triangulation with cached per-triangle gradient operators."""

    def __init__(self, points, triangles):
        self.points = np.asarray(points, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        p = self.points[self.triangles]
        edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        det = edges[:, 0, 0] * edges[:, 1, 1] - edges[:, 0, 1] * edges[:, 1, 0]
        if np.any(np.abs(det) <= 2e-12):
            bad = int(np.argmin(np.abs(det)))
            raise ValueError(f"degenerate triangle {bad}: {self.triangles[bad].tolist()}")
        self.areas = 0.5 * np.abs(det)
        inv = np.empty_like(edges)
        inv[:, 0, 0] = edges[:, 1, 1] / det
        inv[:, 0, 1] = -edges[:, 0, 1] / det
        inv[:, 1, 0] = -edges[:, 1, 0] / det
        inv[:, 1, 1] = edges[:, 0, 0] / det
        # rows of `inv` are the gradients of the barycentric coordinates 1, 2
        self.shape_gradients = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)

    def __len__(self):
        return len(self.triangles)

    @property
    def centroids(self):
        return self.points[self.triangles].mean(axis=1)

    def gradient(self, values):
        """Gradient of the P1 interpolant, shape ``(ntri, m, 2)``."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return np.einsum("tim,tia->tma", values[self.triangles], self.shape_gradients)

    def stiffness(self, coefficient=1.0):
        """Scalar P1 Laplacian ``sum_T c |T| grad phi_i . grad phi_j``."""
        from scipy import sparse

        G = self.shape_gradients
        local = np.einsum("tia,tja->tij", G, G) * (self.areas * coefficient)[:, None, None]
        rows = np.repeat(self.triangles, 3, axis=1).ravel()
        cols = np.tile(self.triangles, (1, 3)).ravel()
        n = len(self.points)
        return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


@dataclass
class DefectiveLattice:
    """Finite patch of the (possibly defective) triangular lattice.

    Bonds are directed and grouped by their owning site: bond ``b`` belongs to
    the stencil of ``owner[b]`` and points at ``nbr[b]`` with reference vector
    ``rho[b]``.  ``complete[l]`` is false for sites whose stencil is cut by the
    edge of the patch.
    """

    positions: np.ndarray
    coords: np.ndarray
    defect: DefectSpec
    owner: np.ndarray
    nbr: np.ndarray
    rho: np.ndarray
    complete: np.ndarray
    triangles: np.ndarray
    core_radius: float = 0.0
    periodic_size: int | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        keys = site_key(self.positions)
        self._index = {tuple(k): n for n, k in enumerate(keys.tolist())}

    def __len__(self):
        return len(self.positions)

    @property
    def hexdist(self):
        return hex_distance(self.coords)

    @property
    def n_bonds(self):
        return np.bincount(self.owner, minlength=len(self))

    def index_of(self, x):
        """Site index at position ``x`` or ``-1``."""
        return self._index.get(tuple(site_key(np.atleast_2d(x))[0].tolist()), -1)

    def indices_of(self, points):
        keys = site_key(np.atleast_2d(points)).tolist()
        return np.array([self._index.get(tuple(k), -1) for k in keys], dtype=np.int64)

    def stencil(self, site):
        return self.rho[self.owner == site]

    def triangulation(self):
        return Triangulation(self.positions, self.triangles)


def _canonical_triangles(index_of_coord):
    """Lattice triangles whose three vertices are all present."""
    tris = []
    for (i, j), a in index_of_coord.items():
        right = index_of_coord.get((i + 1, j))
        up = index_of_coord.get((i, j + 1))
        left_up = index_of_coord.get((i - 1, j + 1))
        if right is not None and up is not None:
            tris.append((a, right, up))
        if up is not None and left_up is not None:
            tris.append((a, up, left_up))
    return tris


def build_hexagon(K, defect=DefectSpec()):
    """Hexagonal patch of side ``K`` centred at the origin with ``defect``."""
    if K < 0:
        raise ValueError("side length must be non-negative")
    defect = defect if isinstance(defect, DefectSpec) else DefectSpec(defect)
    coords = hexagon_coords(K)
    if defect.kind == "vacancy":
        coords = coords[np.any(coords != 0, axis=1)]
    positions = coords @ LATTICE_MATRIX.T
    interstitial = defect.kind == "interstitial"
    if interstitial:
        positions = np.vstack([positions, INTERSTITIAL_POSITION])
        coords = np.vstack([coords, (0, 0)])
    # canonical ordering: by row, then by x
    order = np.lexsort((positions[:, 0], np.rint(2 * SQRT3 * positions[:, 1])))
    positions, coords = positions[order], coords[order]
    n = len(positions)
    is_int = np.zeros(n, dtype=bool)
    if interstitial:
        is_int[np.flatnonzero(order == len(order) - 1)[0]] = True

    lookup = {tuple(c): s for s, c in enumerate(coords.tolist()) if not is_int[s]}
    owner, nbr, rho = [], [], []
    complete = np.ones(n, dtype=bool)
    for s in range(n):
        if is_int[s]:
            continue
        i, j = coords[s]
        for k, (di, dj) in enumerate(NN_OFFSETS):
            t = lookup.get((i + di, j + dj))
            if t is None:
                if not (defect.kind == "vacancy" and i + di == 0 and j + dj == 0):
                    complete[s] = False
                continue
            owner.append(s)
            nbr.append(t)
            rho.append(NN_VECTORS[k])
    owner, nbr, rho = np.array(owner, dtype=np.int64), np.array(nbr, dtype=np.int64), np.array(rho)

    triangles = _canonical_triangles(lookup)
    core_radius = 0.0
    if defect.kind == "vacancy":
        ring = [lookup.get(tuple(o)) for o in NN_OFFSETS]
        if all(r is not None for r in ring):
            triangles += [(ring[0], ring[k], ring[k + 1]) for k in range(1, 5)]
        core_radius = 1.0
    if interstitial:
        s_int = int(np.flatnonzero(is_int)[0])
        d = np.linalg.norm(positions - positions[s_int], axis=1)
        close = np.flatnonzero((d <= BOND_RADIUS) & ~is_int)
        extra_owner = np.concatenate([np.full(len(close), s_int), close])
        extra_nbr = np.concatenate([close, np.full(len(close), s_int)])
        order_b = np.lexsort((extra_nbr, extra_owner))
        owner = np.concatenate([owner, extra_owner[order_b]])
        nbr = np.concatenate([nbr, extra_nbr[order_b]])
        rho = positions[nbr] - positions[owner]
        order_all = np.argsort(owner, kind="stable")
        owner, nbr, rho = owner[order_all], nbr[order_all], rho[order_all]
        triangles = _split_edge(triangles, lookup.get((0, 0)), lookup.get((1, 0)), s_int)
        core_radius = 1.0
    if defect.kind == "screw":
        core_radius = float(np.linalg.norm(defect.core)) + 1.0

    return DefectiveLattice(
        positions=positions,
        coords=coords,
        defect=defect,
        owner=owner,
        nbr=nbr,
        rho=rho,
        complete=complete,
        triangles=np.array(triangles, dtype=np.int64).reshape(-1, 3),
        core_radius=core_radius,
    )


def _split_edge(triangles, a, b, mid):
    """Split every triangle containing the edge ``(a, b)`` at node ``mid``."""
    out = []
    for tri in triangles:
        if a in tri and b in tri:
            k = tri.index(a)
            t = tri[k:] + tri[:k]
            if t[1] == b:
                out += [(t[0], mid, t[2]), (mid, t[1], t[2])]
            else:
                out += [(t[0], t[1], mid), (t[1], t[2], mid)]
        else:
            out.append(tri)
    return out


def build_periodic_cell(K, defect=DefectSpec()):
    """Periodic cell ``{|i| <= K, |j| <= K}`` with period ``2K + 1``.

    Bonds wrap around the cell by minimum image, so ``rho`` holds the true
    reference bond vectors.  Only point defects are admitted.
    """
    defect = defect if isinstance(defect, DefectSpec) else DefectSpec(defect)
    if defect.kind == "screw":
        raise ValueError("periodic cells cannot hold a dislocation")
    M = 2 * K + 1
    r = np.arange(-K, K + 1)
    jj, ii = np.meshgrid(r, r, indexing="ij")
    coords = np.column_stack([ii.ravel(), jj.ravel()])
    if defect.kind == "vacancy":
        coords = coords[np.any(coords != 0, axis=1)]
    positions = coords @ LATTICE_MATRIX.T
    lookup = {tuple(c): s for s, c in enumerate(coords.tolist())}
    wrap = lambda v: (v + K) % M - K  # noqa: E731
    owner, nbr, rho = [], [], []
    for s, (i, j) in enumerate(coords.tolist()):
        for k, (di, dj) in enumerate(NN_OFFSETS):
            t = lookup.get((wrap(i + di), wrap(j + dj)))
            if t is None:
                continue
            owner.append(s)
            nbr.append(t)
            rho.append(NN_VECTORS[k])
    owner, nbr, rho = np.array(owner), np.array(nbr), np.array(rho)
    n = len(positions)
    if defect.kind == "interstitial":
        positions = np.vstack([positions, INTERSTITIAL_POSITION])
        coords = np.vstack([coords, (0, 0)])
        s_int = n
        d = np.linalg.norm(positions[:n] - positions[s_int], axis=1)
        close = np.flatnonzero(d <= BOND_RADIUS)
        owner = np.concatenate([owner, np.full(len(close), s_int), close])
        nbr = np.concatenate([nbr, close, np.full(len(close), s_int)])
        rho = np.vstack([rho, positions[close] - positions[s_int], positions[s_int] - positions[close]])
        order = np.argsort(owner, kind="stable")
        owner, nbr, rho = owner[order], nbr[order], rho[order]
        n += 1
    return DefectiveLattice(
        positions=positions,
        coords=coords,
        defect=defect,
        owner=owner.astype(np.int64),
        nbr=nbr.astype(np.int64),
        rho=rho,
        complete=np.ones(n, dtype=bool),
        triangles=np.zeros((0, 3), dtype=np.int64),
        core_radius=0.0 if defect.kind == "none" else 1.0,
        periodic_size=M,
    )


def nn_stencil(lattice, site):
    """Reference bond vectors of ``site``'s stencil."""
    return lattice.stencil(site)


def p1_gradient(values, tri):
    """Per-triangle gradient of the P1 interpolant of nodal ``values``."""
    return tri.gradient(values)


def cutoff(t):
    """C2 cut-off: 1 on ``[0, 3/4]``, 0 on ``[1, inf)``."""
    s = np.clip((1.0 - np.asarray(t, dtype=float)) * 4.0, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s**2)


def truncate(values, tri, R):
    """Truncation ``eta(x/R) (u - a_R)`` with ``a_R`` the annulus mean."""
    values = np.asarray(values, dtype=float)
    c = np.linalg.norm(tri.centroids, axis=1)
    annulus = (c >= 0.75 * R) & (c <= R)
    if not np.any(annulus):
        raise ValueError(f"annulus B_{R} minus B_{0.75 * R} contains no triangle")
    tri_mean = values[tri.triangles[annulus]].mean(axis=1)
    w = tri.areas[annulus]
    a = (w[:, None] * tri_mean.reshape(len(w), -1)).sum(axis=0) / w.sum()
    eta = cutoff(np.linalg.norm(tri.points, axis=1) / R)
    out = (values.reshape(len(values), -1) - a) * eta[:, None]
    return out.reshape(values.shape)


def write_lattice_csv(lattice, path):
    """Dump sites as ``index,x,y,n_bonds`` in canonical row order."""
    pos = lattice.positions
    order = np.lexsort((pos[:, 0], np.rint(2 * SQRT3 * pos[:, 1])))
    nb = lattice.n_bonds
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y", "n_bonds"])
        for s in order:
            w.writerow([int(s), repr(float(pos[s, 0])), repr(float(pos[s, 1])), int(nb[s])])
