"""Pair-functional site potentials.

Both models share the form ``V(g) = sum_b phi(r_b) + G(sum_b psi(r_b))`` over
the bonds ``g_b`` of a stencil.  For in-plane displacements ``r_b = |g_b|``;
for the anti-plane model ``g_b`` is a scalar and ``r_b = g_b``.

The vectorised kernels additionally accept bond weights ``w_b`` and a site
weight ``omega``:

    V_w(g) = sum_b w_b phi(r_b) + omega * G(sum_b (w_b / omega) psi(r_b))

which reduces to ``V`` for unit weights.  Zero-weight bonds act as padding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_BOND_LENGTH = 0.1


class DeformationError(ValueError):
    """Raised when a deformed bond collapses below ``MIN_BOND_LENGTH``."""

    def __init__(self, site, length):
        super().__init__(f"bond of length {length:.3g} at site {site}: atoms (nearly) coincide")
        self.site = site
        self.length = length


class PairFunctional:
    range_dim = 2

    def phi(self, r):
        raise NotImplementedError

    def psi(self, r):
        raise NotImplementedError

    def embed(self, s):
        raise NotImplementedError

    # -- vectorised site kernels -------------------------------------------
    def _lengths(self, g):
        if self.range_dim == 1:
            return g[..., 0], None
        r = np.sqrt(np.einsum("...m,...m->...", g, g))
        return r, g / np.where(r > 0, r, 1.0)[..., None]

    def _check(self, r, w, sites=None):
        if self.range_dim == 1:
            return
        short = (r < MIN_BOND_LENGTH) & (w != 0)
        if np.any(short):
            s, b = np.argwhere(short)[0]
            site = int(s if sites is None else sites[s])
            raise DeformationError(site, float(r[s, b]))

    def energies(self, g, w, omega, sites=None):
        """Site energies for stencils ``g`` of shape ``(S, B, m)``."""
        r, _ = self._lengths(g)
        self._check(r, w, sites)
        p, _, _ = self.phi(r)
        q, _, _ = self.psi(r)
        s = np.einsum("sb,sb->s", w, q) / omega
        G, _, _ = self.embed(s)
        return np.einsum("sb,sb->s", w, p) + omega * G

    # increments f(x + dx) - f(x) without cancellation; subclasses override
    def phi_increment(self, r, dr):
        return self.phi(r + dr)[0] - self.phi(r)[0]

    def psi_increment(self, r, dr):
        return self.psi(r + dr)[0] - self.psi(r)[0]

    def embed_increment(self, s, ds):
        return self.embed(s + ds)[0] - self.embed(s)[0]

    def energy_increments(self, g0, d, w, omega, sites=None):
        """``V_w(g0 + d) - V_w(g0)`` evaluated in increment form.

        Forming the two site energies and subtracting loses all relative
        accuracy once ``d`` is small; here every term is expanded so that the
        result carries the rounding error of the increment only.
        """
        g = g0 + d
        r, _ = self._lengths(g)
        self._check(r, w, sites)
        r0, _ = self._lengths(g0)
        if self.range_dim == 1:
            dr = d[..., 0]
        else:
            dr = np.einsum("...m,...m->...", 2 * g0 + d, d) / np.where(r + r0 > 0, r + r0, 1.0)
        s0 = np.einsum("sb,sb->s", w, self.psi(r0)[0]) / omega
        ds = np.einsum("sb,sb->s", w, self.psi_increment(r0, dr)) / omega
        return np.einsum("sb,sb->s", w, self.phi_increment(r0, dr)) + omega * self.embed_increment(s0, ds)

    def derivatives(self, g, w, omega, hessian=False, sites=None):
        """Site energies, ``dV/dg`` and optionally ``d2V/dg2``.

        The Hessian has shape ``(S, B, m, B, m)``.
        """
        r, unit = self._lengths(g)
        self._check(r, w, sites)
        p, dp, ddp = self.phi(r)
        q, dq, ddq = self.psi(r)
        s = np.einsum("sb,sb->s", w, q) / omega
        G, dG, ddG = self.embed(s)
        energy = np.einsum("sb,sb->s", w, p) + omega * G
        radial = w * (dp + dG[:, None] * dq)
        if self.range_dim == 1:
            grad = radial[..., None]
        else:
            grad = radial[..., None] * unit
        if not hessian:
            return energy, grad, None
        S, B, m = g.shape
        stiff = w * (ddp + dG[:, None] * ddq)
        coupling = ddG / omega
        if self.range_dim == 1:
            hess = np.zeros((S, B, 1, B, 1))
            idx = np.arange(B)
            hess[:, idx, 0, idx, 0] = stiff
            a = w * dq
            hess[:, :, 0, :, 0] += coupling[:, None, None] * a[:, :, None] * a[:, None, :]
            return energy, grad, hess
        outer = unit[..., :, None] * unit[..., None, :]
        tangent = radial / np.where(r > 0, r, 1.0)
        diag = stiff[..., None, None] * outer + tangent[..., None, None] * (np.eye(2) - outer)
        hess = np.zeros((S, B, 2, B, 2))
        idx = np.arange(B)
        hess[:, idx, :, idx, :] = np.moveaxis(diag, 0, 1)
        a = (w * dq)[..., None] * unit
        hess += coupling[:, None, None, None, None] * a[:, :, :, None, None] * a[:, None, None, :, :]
        return energy, grad, hess

    # -- single-stencil convenience ----------------------------------------
    def _single(self, diffs):
        g = np.asarray(diffs, dtype=float)
        if self.range_dim == 1:
            g = g.reshape(1, -1, 1)
        else:
            g = g.reshape(1, -1, 2)
        return g, np.ones(g.shape[:2]), np.ones(1)

    def energy(self, diffs):
        g, w, om = self._single(diffs)
        return float(self.energies(g, w, om)[0])

    def gradient(self, diffs):
        g, w, om = self._single(diffs)
        grad = self.derivatives(g, w, om)[1][0]
        return grad[:, 0] if self.range_dim == 1 else grad

    def hessian(self, diffs):
        g, w, om = self._single(diffs)
        hess = self.derivatives(g, w, om, hessian=True)[2][0]
        if self.range_dim == 1:
            return hess[:, 0, :, 0]
        return np.transpose(hess, (0, 2, 1, 3))


@dataclass(frozen=True)
class EamPotential(PairFunctional):
    """Morse pair term plus a quartic embedding of an exponential density."""

    alpha: float = 4.0
    beta: float = 3.0
    gamma: float = 5.0
    s0: float = 6.0 * np.exp(-3.0 * 0.9)

    range_dim = 2

    def phi(self, r):
        a = np.exp(-self.alpha * (r - 1.0))
        al = self.alpha
        return a * a - 2 * a, -2 * al * a * a + 2 * al * a, 4 * al**2 * a * a - 2 * al**2 * a

    def psi(self, r):
        e = np.exp(-self.beta * r)
        return e, -self.beta * e, self.beta**2 * e

    def phi_increment(self, r, dr):
        a0 = np.exp(-self.alpha * (r - 1.0))
        da = a0 * np.expm1(-self.alpha * dr)
        return da * (2 * a0 + da - 2)

    def psi_increment(self, r, dr):
        return np.exp(-self.beta * r) * np.expm1(-self.beta * dr)

    def embed_increment(self, s, ds):
        d0 = s - self.s0
        d1 = d0 + ds
        return self.gamma * ds * (d0 + d1) * (1 + d0 * d0 + d1 * d1)

    def embed(self, s):
        d = s - self.s0
        g = self.gamma
        return g * (d**2 + d**4), g * (2 * d + 4 * d**3), g * (2 + 12 * d**2)


@dataclass(frozen=True)
class AntiplanePotential(PairFunctional):
    """One-periodic anti-plane model ``phi = psi = sin^2(pi r)``, ``G = s^2/2``."""

    range_dim = 1

    def phi(self, r):
        t = np.pi * r
        return np.sin(t) ** 2, np.pi * np.sin(2 * t), 2 * np.pi**2 * np.cos(2 * t)

    psi = phi

    def phi_increment(self, r, dr):
        return np.sin(np.pi * dr) * np.sin(np.pi * (2 * r + dr))

    psi_increment = phi_increment

    def embed(self, s):
        return 0.5 * s**2, s, np.ones_like(s)

    def embed_increment(self, s, ds):
        return ds * (s + 0.5 * ds)


_EAM = EamPotential()
_ANTIPLANE = AntiplanePotential()


def eam_energy(diffs, potential=_EAM):
    return potential.energy(diffs)


def eam_gradient(diffs, potential=_EAM):
    """``dV/d(D_rho y)`` per bond, shape ``(B, 2)``."""
    return potential.gradient(diffs)


def eam_hessian(diffs, potential=_EAM):
    """Second partials as ``(B, B, 2, 2)`` blocks ``[rho, sigma]``."""
    return potential.hessian(diffs)


def antiplane_energy(diffs):
    return _ANTIPLANE.energy(diffs)


def antiplane_gradient(diffs):
    return _ANTIPLANE.gradient(diffs)


def antiplane_hessian(diffs):
    return _ANTIPLANE.hessian(diffs)
