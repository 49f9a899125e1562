"""Energy-difference functionals, forces and Hessians.

Every model is a sum of *site groups*.  A group holds ``S`` stencils of ``B``
bonds each.  The bond values of stencil ``s`` are an affine function of the
nodal displacement ``u``:

    g[s, b] = base[s, b] + sum_j coeff[s, b, j] * u[nodes[s, j]]

so a lattice site (``coeff = -1`` on the owner, ``+1`` on the neighbour), a
Cauchy-Born element (``coeff = grad(lambda_j) . rho_b``) and a weighted
interface site all go through the same vectorised code.  The functional is
``sum_s scale[s] * (V(g[s]) - V(base[s]))``, so it vanishes at ``u = 0``
exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .lattice import CELL_AREA, NN_VECTORS


@dataclass
class SiteGroup:
    potential: object
    nodes: np.ndarray
    coeff: np.ndarray
    base: np.ndarray
    weights: np.ndarray
    omega: np.ndarray
    scale: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def increments(self, u):
        return np.einsum("sbj,sjm->sbm", self.coeff, u[self.nodes])

    def bonds(self, u):
        return self.base + self.increments(u)

    def energies(self, u):
        e = self.potential.energy_increments(self.base, self.increments(u), self.weights, self.omega, self.labels)
        return self.scale * e

    def energies_and_forces(self, u):
        d = self.increments(u)
        e = self.potential.energy_increments(self.base, d, self.weights, self.omega, self.labels)
        _, dv, _ = self.potential.derivatives(self.base + d, self.weights, self.omega, sites=self.labels)
        dv *= self.scale[:, None, None]
        return self.scale * e, np.einsum("sbj,sbm->sjm", self.coeff, dv)

    def stencil_hessians(self, u):
        g = self.bonds(u)
        _, _, hb = self.potential.derivatives(g, self.weights, self.omega, hessian=True, sites=self.labels)
        return hb * self.scale[:, None, None, None, None]

    def hessian_blocks(self, u):
        hb = self.stencil_hessians(u)
        return np.einsum("sbj,sbacd,sck->sjakd", self.coeff, hb, self.coeff, optimize=True)

    def hessian_times(self, u, v):
        hb = self.stencil_hessians(u)
        dv = np.einsum("sbj,sjm->sbm", self.coeff, v[self.nodes])
        return np.einsum("sbj,sbacd,scd->sja", self.coeff, hb, dv, optimize=True)


@dataclass
class QuadraticGroup:
    """Stencils with the quadratic energy ``lin . q + q . A q / 2`` of ``q = Du``."""

    nodes: np.ndarray
    coeff: np.ndarray
    lin: np.ndarray
    matrix: np.ndarray
    scale: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def _q(self, u):
        q = np.einsum("sbj,sjm->sbm", self.coeff, u[self.nodes])
        return q.reshape(len(q), -1)

    def energies(self, u):
        q = self._q(u)
        return self.scale * (np.einsum("sk,sk->s", self.lin, q) + 0.5 * np.einsum("sk,kl,sl->s", q, self.matrix, q))

    def energies_and_forces(self, u):
        q = self._q(u)
        aq = q @ self.matrix
        e = self.scale * (np.einsum("sk,sk->s", self.lin, q) + 0.5 * np.einsum("sk,sk->s", aq, q))
        dq = (self.lin + aq) * self.scale[:, None]
        dq = dq.reshape(self.coeff.shape[0], self.coeff.shape[1], -1)
        return e, np.einsum("sbj,sbm->sjm", self.coeff, dq)

    def hessian_blocks(self, u):
        S, B, J = self.coeff.shape
        m = self.matrix.shape[0] // B
        hb = self.matrix.reshape(B, m, B, m)
        out = np.einsum("sbj,bacd,sck->sjakd", self.coeff, hb, self.coeff, optimize=True)
        return out * self.scale[:, None, None, None, None]

    def hessian_times(self, u, v):
        dv = self._q(v) @ self.matrix * self.scale[:, None]
        S, B, J = self.coeff.shape
        return np.einsum("sbj,sbm->sjm", self.coeff, dv.reshape(S, B, -1))


def _scatter(nodes, values, n):
    """Sum ``values[s, j, :]`` into node ``nodes[s, j]``."""
    flat = nodes.ravel()
    vals = values.reshape(len(flat), -1)
    return np.column_stack([np.bincount(flat, weights=vals[:, a], minlength=n) for a in range(vals.shape[1])])


class EnergyModel:
    """Energy difference functional over ``n_nodes`` nodes with values in R^m."""

    def __init__(self, n_nodes, range_dim, groups):
        self.n_nodes = n_nodes
        self.range_dim = range_dim
        self.groups = [g for g in groups if len(g)]

    @property
    def shape(self):
        return (self.n_nodes, self.range_dim)

    def _as_field(self, u):
        return np.asarray(u, dtype=float).reshape(self.shape)

    def site_energies(self, u):
        u = self._as_field(u)
        if not self.groups:
            return np.zeros(0)
        return np.concatenate([g.energies(u) for g in self.groups])

    def energy(self, u):
        return float(np.sum(self.site_energies(u)))

    def energy_and_gradient(self, u):
        u = self._as_field(u)
        energies, grad = [], np.zeros(self.shape)
        for g in self.groups:
            e, f = g.energies_and_forces(u)
            energies.append(e)
            grad += _scatter(g.nodes, f, self.n_nodes)
        total = float(np.sum(np.concatenate(energies))) if energies else 0.0
        return total, grad

    def gradient(self, u):
        return self.energy_and_gradient(u)[1]

    def hessian_apply(self, u, v):
        u, v = self._as_field(u), self._as_field(v)
        out = np.zeros(self.shape)
        for g in self.groups:
            out += _scatter(g.nodes, g.hessian_times(u, v), self.n_nodes)
        return out

    def hessian(self, u):
        """Assembled Hessian as a sparse matrix on the flattened field."""
        u = self._as_field(u)
        m, n = self.range_dim, self.n_nodes
        rows, cols, vals = [], [], []
        for g in self.groups:
            blocks = g.hessian_blocks(u)
            S, J = g.nodes.shape
            dof = (g.nodes[:, :, None] * m + np.arange(m)).reshape(S, J * m)
            rows.append(np.repeat(dof, J * m, axis=1).ravel())
            cols.append(np.tile(dof, (1, J * m)).ravel())
            vals.append(blocks.reshape(S, J * m * J * m).ravel())
        if not rows:
            return sparse.csr_matrix((n * m, n * m))
        H = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * m, n * m)
        )
        H.sum_duplicates()
        return H


# -- builders ------------------------------------------------------------------


def stencil_tables(lattice, sites):
    """Padded neighbour tables ``(nbr, rho, mask)`` for ``sites``."""
    owner = lattice.owner
    start = np.searchsorted(owner, np.arange(len(lattice) + 1))
    counts = np.diff(start)[sites]
    B = int(counts.max()) if len(sites) else 0
    rank = np.arange(B)
    mask = rank[None, :] < counts[:, None]
    idx = np.where(mask, start[sites][:, None] + rank[None, :], 0)
    nbr = np.where(mask, lattice.nbr[idx], sites[:, None])
    rho = np.where(mask[..., None], lattice.rho[idx], NN_VECTORS[rank % 6][None, :, :])
    return nbr, rho, mask


def lattice_group(potential, lattice, sites, base, weights=None, omega=None, node_map=None):
    """Site group for lattice ``sites`` with reference bond values ``base``.

    ``base`` is called with ``(owner_index, nbr_index, rho, mask)`` and must
    return the reference bond values ``(S, B, m)``.  ``node_map`` maps lattice
    indices to model node indices.
    """
    sites = np.asarray(sites, dtype=np.int64)
    nbr, rho, mask = stencil_tables(lattice, sites)
    S, B = nbr.shape
    nodes = np.concatenate([sites[:, None], nbr], axis=1)
    if node_map is not None:
        nodes = node_map[nodes]
    coeff = np.zeros((S, B, B + 1))
    coeff[:, :, 0] = -mask.astype(float)
    coeff[:, np.arange(B), np.arange(B) + 1] = mask
    w = mask.astype(float) if weights is None else weights * mask
    om = np.ones(S) if omega is None else omega
    return SiteGroup(
        potential=potential,
        nodes=nodes,
        coeff=coeff,
        base=base(sites, nbr, rho, mask),
        weights=w,
        omega=om,
        scale=np.ones(S),
        labels=sites,
    )


def point_base(potential):
    """Reference bond values of the identity predictor (the bond vectors)."""

    def base(sites, nbr, rho, mask):
        return np.where(mask[..., None], rho, NN_VECTORS[np.arange(rho.shape[1]) % 6][None])

    return base


def screw_base(predictor, positions):
    """Raw predictor differences for the anti-plane model."""
    u0 = predictor.u0(positions)

    def base(sites, nbr, rho, mask):
        return np.where(mask, u0[nbr] - u0[sites][:, None], 0.0)[..., None]

    return base


def reference_stencil(range_dim, shear=(0.0, 0.0)):
    """Homogeneous stencil ``F rho`` for the reference state."""
    if range_dim == 1:
        return (NN_VECTORS @ np.asarray(shear, dtype=float))[:, None]
    return NN_VECTORS.copy()


# -- Cauchy-Born ---------------------------------------------------------------


class CauchyBorn:
    """Strain energy per unit area ``W(F) = V(F rho) / |det A|``."""

    def __init__(self, potential):
        self.potential = potential

    def _stencil(self, F):
        F = np.atleast_2d(np.asarray(F, dtype=float))
        g = NN_VECTORS @ F.T
        return g[None], np.ones((1, 6)), np.ones(1)

    def energy(self, F):
        g, w, om = self._stencil(F)
        return float(self.potential.energies(g, w, om)[0]) / CELL_AREA

    def stress(self, F):
        g, w, om = self._stencil(F)
        dv = self.potential.derivatives(g, w, om)[1][0]
        return np.einsum("bm,ba->ma", dv, NN_VECTORS) / CELL_AREA

    def tangent(self, F):
        g, w, om = self._stencil(F)
        hb = self.potential.derivatives(g, w, om, hessian=True)[2][0]
        return np.einsum("bmcn,ba,cd->mand", hb, NN_VECTORS, NN_VECTORS) / CELL_AREA


def cb_density(F, potential):
    return CauchyBorn(potential).energy(F)
