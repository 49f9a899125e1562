"""Homogeneous lattice Hessian, its Green's function, and divergence form.

Lattice sites are addressed by integer index coordinates ``n`` with position
``A n``.  With the Fourier convention ``u_hat(theta) = sum_n u(n) exp(-i
theta . n)`` the Hessian of the homogeneous site energy is the multiplier

    H_hat(theta) = sum_{r, s} (exp(-i theta . r) - 1)(exp(i theta . s) - 1) V_rs

over pairs of stencil offsets, where ``V_rs`` are the second partials of the
site potential at the reference stencil.  The Green's function itself
diverges logarithmically in two dimensions, so only its differences are
tabulated; they are inverse transforms of bounded or ``1/|theta|``-singular
symbols, integrated with a Duffy transform centred on ``theta = 0``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .energy import reference_stencil
from .lattice import LATTICE_MATRIX, NN_OFFSETS
from .potentials import EamPotential

ROTATION = np.array([[0, -1], [1, 1]])  # 60 degree rotation in index coordinates


def stencil_hessian(potential=None, shear=(0.0, 0.0)):
    """Second partials ``V_rs`` at the homogeneous stencil, shape ``(6, 6, m, m)``."""
    potential = EamPotential() if potential is None else potential
    m = potential.range_dim
    g = reference_stencil(m, shear)
    h = potential.hessian(g if m == 2 else g[:, 0])
    return h if m == 2 else h[:, :, None, None]


def dynamical_matrix(theta, potential=None, hessian=None):
    """``H_hat`` at wave vectors ``theta`` (index coordinates), shape ``(..., m, m)``."""
    V = stencil_hessian(potential) if hessian is None else hessian
    theta = np.asarray(theta, dtype=float)
    phase = np.exp(1j * (theta @ NN_OFFSETS.T)) - 1.0  # (..., 6)
    H = np.einsum("...r,...s,rsab->...ab", np.conj(phase), phase, V)
    return H.real


def pair_stiffness(potential=None, hessian=None):
    """Pair-form coefficients ``A_tau`` with ``H_hat = sum 4 sin^2(theta.tau/2) A_tau``.

    Returns a dict from offset tuples to ``m x m`` matrices; offsets ``tau``
    and ``-tau`` are stored separately and ``A_tau = A_{-tau}^T``.
    """
    V = stencil_hessian(potential) if hessian is None else hessian
    out = {}

    def add(tau, M):
        key = tuple(int(t) for t in tau)
        if key == (0, 0):
            return
        out[key] = out.get(key, 0.0) + M

    # Re[(e^{-ia}-1)(e^{ib}-1)] = 2 sin^2(a/2) + 2 sin^2(b/2) - 2 sin^2((a-b)/2)
    for r in range(6):
        for s in range(6):
            M = V[r, s]
            add(NN_OFFSETS[r], 0.5 * M)
            add(NN_OFFSETS[s], 0.5 * M)
            add(NN_OFFSETS[r] - NN_OFFSETS[s], -0.5 * M)
    # symmetrise between tau and -tau
    sym = {}
    for tau, M in out.items():
        neg = tuple(-t for t in tau)
        other = out.get(neg, np.zeros_like(M))
        sym[tau] = 0.5 * (M + np.transpose(other))
    return sym


def dynamical_matrix_pairs(theta, pairs):
    """Evaluate ``sum_tau 4 sin^2(theta . tau / 2) A_tau``."""
    theta = np.asarray(theta, dtype=float)
    taus = np.array(list(pairs.keys()))
    A = np.array(list(pairs.values()))
    w = 4 * np.sin(0.5 * (theta @ taus.T)) ** 2
    return np.einsum("...t,tab->...ab", w, A)


def stability_constant(potential=None, n=64):
    """``min lambda_min(H_hat(theta)) / |k|^2`` over an ``n x n`` grid, ``k = A^{-T} theta``."""
    t = (np.arange(n) + 0.5) / n * 2 * np.pi - np.pi
    th = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    H = dynamical_matrix(th, potential)
    k = th @ np.linalg.inv(LATTICE_MATRIX)  # k = A^{-T} theta
    lam = np.linalg.eigvalsh(H)[:, 0]
    return float(np.min(lam / np.einsum("ij,ij->i", k, k)))


# -- quadrature -------------------------------------------------------------------


def duffy_rule(level, order=8, even=False):
    """Nodes and weights on ``[-pi, pi]^2`` for integrands with a point singularity at 0.

    The square is split into four triangles with apex at the origin, each
    mapped from the unit square by a Duffy transform and integrated with a
    tensor Gauss-Legendre rule on a ``2^level x 2^level`` subdivision.  The
    weights include the normalisation ``1 / (2 pi)^2``.  With ``even=True``
    only two triangles are returned, with doubled weights, which is exact
    for integrands invariant under ``theta -> -theta``.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    cells = 2**level
    edges = np.arange(cells) / cells
    xs = ((edges[:, None] + 0.5 * (x[None, :] + 1) / cells)).ravel()
    ws = np.tile(0.5 * w / cells, cells)
    U, Vv = np.meshgrid(xs, xs, indexing="ij")
    WU, WV = np.meshgrid(ws, ws, indexing="ij")
    U, Vv, W = U.ravel(), Vv.ravel(), (WU * WV).ravel()
    corners = np.pi * np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]], dtype=float)
    nodes, weights = [], []
    for k in range(2 if even else 4):
        P1, P2 = corners[k], corners[(k + 1) % 4]
        pts = U[:, None] * (P1[None, :] + Vv[:, None] * (P2 - P1)[None, :])
        jac = abs(P1[0] * (P2 - P1)[1] - P1[1] * (P2 - P1)[0])
        nodes.append(pts)
        weights.append(W * U * jac)
    scale = 2.0 if even else 1.0
    return np.concatenate(nodes), scale * np.concatenate(weights) / (2 * np.pi) ** 2


@dataclass
class GreensTable:
    points: np.ndarray  # (P, 2) index coordinates
    offsets: list  # shift combinations that define the difference operator
    values: np.ndarray  # (P, m, m)
    level: int
    converged: bool
    change: float


class LatticeGreens:
    """Differences of the lattice Green's function ``G = F^{-1}[H_hat^{-1}]``."""

    def __init__(self, potential=None, order=8, tol=1e-6, min_level=3, max_level=7, chunk=64):
        self.potential = EamPotential() if potential is None else potential
        self.hessian = stencil_hessian(self.potential)
        self.m = self.hessian.shape[-1]
        self.order = order
        self.tol = tol
        self.min_level = min_level
        self.max_level = max_level
        self.chunk = chunk
        self._rules = {}

    def _rule(self, level):
        if level not in self._rules:
            # the real part of every difference integrand is even in theta
            th, w = duffy_rule(level, self.order, even=True)
            Hinv = np.linalg.inv(dynamical_matrix(th, hessian=self.hessian))
            self._rules[level] = (th, w[:, None, None] * Hinv)
        return self._rules[level]

    def _evaluate(self, level, points, combos):
        """``sum_c coeff_c G(n + shift_c)`` for each point ``n`` and each combination."""
        th, WH = self._rule(level)
        flat = WH.reshape(len(th), -1)
        out = np.zeros((len(combos), len(points), self.m, self.m))
        symbols = []
        for combo in combos:
            shifts = np.array([s for s, _ in combo], dtype=float)
            coeffs = np.array([c for _, c in combo], dtype=float)
            symbols.append(np.exp(1j * (th @ shifts.T)) @ coeffs)
        for a in range(0, len(points), self.chunk):
            block = points[a : a + self.chunk]
            phase = np.exp(1j * (block @ th.T))
            for k, symbol in enumerate(symbols):
                vals = (phase * symbol[None, :]).real @ flat
                out[k, a : a + self.chunk] = vals.reshape(len(block), self.m, self.m)
        return out

    def evaluate(self, points, combos):
        """Adaptive evaluation of differences ``sum_c coeff_c G(n + s_c)``.

        Each combination is a list of ``(shift, coeff)`` pairs whose
        coefficients sum to zero.  The subdivision is refined until two
        successive levels agree to ``tol``.  Returns one table per combination.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        for combo in combos:
            if abs(sum(c for _, c in combo)) > 1e-12:
                raise ValueError("difference coefficients must sum to zero")
        prev = self._evaluate(self.min_level, points, combos)
        change = np.inf
        level = self.min_level
        while level < self.max_level:
            level += 1
            cur = self._evaluate(level, points, combos)
            change = float(np.max(np.abs(cur - prev)))
            prev = cur
            if change < self.tol:
                break
        ok = change < self.tol
        return [GreensTable(points.astype(int), c, v, level, ok, change) for c, v in zip(combos, prev)]

    def differences(self, points, combo):
        return self.evaluate(points, [combo])[0]

    def first_differences(self, points, rhos=NN_OFFSETS):
        """``D_rho G`` for every ``rho`` in ``rhos``."""
        combos = [[(tuple(int(v) for v in r), 1.0), ((0, 0), -1.0)] for r in rhos]
        return self.evaluate(points, combos)

    def first_difference(self, points, rho):
        """``D_rho G(n) = G(n + rho) - G(n)``."""
        return self.differences(points, [(tuple(rho), 1.0), ((0, 0), -1.0)])

    def second_difference(self, points, rho, sigma):
        """``D_rho D_sigma G(n)``."""
        r, s = np.asarray(rho), np.asarray(sigma)
        combo = [(tuple(r + s), 1.0), (tuple(r), -1.0), (tuple(s), -1.0), ((0, 0), 1.0)]
        return self.differences(points, combo)


def greens_function(points, rho=(1, 0), potential=None, tol=1e-6):
    """First differences ``D_rho G`` at index-coordinate ``points``."""
    return LatticeGreens(potential, tol=tol).first_difference(points, rho)


def apply_hessian_to_differences(dG, hessian):
    """``(H G)(n)`` from first differences ``dG[k](n) = D_{r_k} G(n)``.

    ``dG`` maps an index tuple to an array ``(6, m, m)`` of the six first
    differences at that site; ``(H u)(n) = sum_{r,s} V_rs (D_s u(n - r) -
    D_s u(n))``.
    """
    out = {}
    for n in dG:
        n_arr = np.asarray(n)
        acc = 0.0
        for r in range(6):
            back = tuple(int(v) for v in n_arr - NN_OFFSETS[r])
            if back not in dG:
                acc = None
                break
            acc = acc + np.einsum("sab,sbc->ac", hessian[r], dG[back] - dG[n])
        if acc is not None:
            out[n] = acc
    return out


def torus_greens(size=256, potential=None):
    """Green's function of the homogeneous Hessian on a periodic ``size^2`` torus.

    Solves ``H g = delta_0 - 1/size^2`` by FFT; returns ``g`` with shape
    ``(size, size, m, m)`` indexed by ``n mod size``.
    """
    V = stencil_hessian(potential)
    m = V.shape[-1]
    t = 2 * np.pi * np.fft.fftfreq(size)
    th = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)
    H = dynamical_matrix(th.reshape(-1, 2), hessian=V).reshape(size, size, m, m)
    H[0, 0] = np.eye(m)
    Hinv = np.linalg.inv(H)
    Hinv[0, 0] = 0.0
    g = np.fft.ifft2(Hinv, axes=(0, 1)).real
    return g


def torus_difference(g, points, rho):
    size = g.shape[0]
    p = np.asarray(points, dtype=int)
    q = p + np.asarray(rho, dtype=int)
    return g[q[:, 0] % size, q[:, 1] % size] - g[p[:, 0] % size, p[:, 1] % size]


def ray_points(rmin, rmax, directions=((1, 0), (1, 1), (2, -1))):
    """Lattice points ``t * d`` along rays, with Euclidean radii."""
    pts, radii = [], []
    for d in directions:
        d = np.asarray(d)
        length = np.linalg.norm(LATTICE_MATRIX @ d)
        for t in range(1, int(rmax / length) + 2):
            r = t * length
            if rmin <= r <= rmax:
                pts.append(t * d)
                radii.append(r)
    return np.array(pts), np.array(radii)


def second_difference_decay(greens, rmin=8, rmax=64):
    """Fitted log-log slope of ``max |D_r D_s G(n)|`` against ``|A n|``."""
    pts, radii = ray_points(rmin, rmax)
    combos = []
    for r in range(3):
        for s in range(r, 3):
            a, b = NN_OFFSETS[r], NN_OFFSETS[s]
            combos.append([(tuple(a + b), 1.0), (tuple(a), -1.0), (tuple(b), -1.0), ((0, 0), 1.0)])
    tabs = greens.evaluate(pts, combos)
    amp = np.max([np.linalg.norm(t.values.reshape(len(pts), -1), axis=1) for t in tabs], axis=0)
    slope, _ = np.polyfit(np.log(radii), np.log(amp), 1)
    return float(slope), radii, amp, all(t.converged for t in tabs)


def write_greens_csv(greens, radius, path):
    """Tabulate ``D_rho G`` for the six bond directions on a hexagon of side ``radius``."""
    from .lattice import hexagon_coords

    pts = hexagon_coords(int(radius))
    m = greens.m
    rows = []
    for k, tab in enumerate(greens.first_differences(pts)):
        for p, val in zip(pts, tab.values):
            rows.append([int(p[0]), int(p[1]), k] + [repr(float(v)) for v in val.ravel()])
    names = [f"g{a}{b}" for a in range(1, m + 1) for b in range(1, m + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["l1", "l2", "rho"] + names)
        w.writerows(rows)
    return len(rows)


# -- divergence form ----------------------------------------------------------------


def _prefix(f, axis):
    """``F(n) = sum_{lambda < n} f(lambda)`` along ``axis``, padded with a leading zero."""
    pad = [(0, 0)] * f.ndim
    pad[axis] = (1, 0)
    return np.pad(np.cumsum(f, axis=axis), pad)


def _contract(f, axis, L):
    """One directional step: returns ``(f_tilde, delta_g)`` on the same box."""
    F = _prefix(f, axis)
    n = np.arange(-L, L + 1)

    def at(k):
        return np.take(F, np.clip(k + L, 0, 2 * L + 1), axis=axis)

    dg = at(3 * n - 1) - at(n)
    ft = at(3 * n + 2) - at(3 * n - 1)
    return ft, dg


def seminorm(f, p):
    """``sup_{n != 0} (|n|_inf - 1/2)^p |f(n)|`` on a centred box."""
    L = (f.shape[0] - 1) // 2
    i = np.arange(-L, L + 1)
    r = np.maximum(np.abs(i)[:, None], np.abs(i)[None, :]).astype(float)
    mask = r > 0
    return float(np.max(((r - 0.5) ** p * np.abs(f))[mask])) if np.any(mask) else 0.0


def divergence_form(f, p=None, tol=1e-13, max_iter=200):
    """Write a mean-zero field as ``f = D_{e1} g_1 + D_{e2} g_2``.

    ``f`` is a ``(2L+1, 2L+1)`` array centred at the origin, indexed by
    ``(n_1, n_2)``.  Returns ``g`` of shape ``(2, 2L+1, 2L+1)`` supported in
    the same box, with ``D_e g(n) = g(n + e) - g(n)``.  If ``p`` is given,
    also returns the seminorms ``[f^(k)]_p`` of the iterates.
    """
    f = np.array(f, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1] or f.shape[0] % 2 == 0:
        raise ValueError("f must be a square array of odd side centred at the origin")
    scale = float(np.sum(np.abs(f)))
    if abs(float(np.sum(f))) > 1e-12 * max(1.0, scale):
        raise ValueError("f must have zero sum")
    L = (f.shape[0] - 1) // 2
    g = np.zeros((2,) + f.shape)
    history = [seminorm(f, p)] if p is not None else []
    for _ in range(max_iter):
        if np.max(np.abs(f)) <= tol * max(1.0, scale):
            break
        for axis in (1, 0):  # C = C_1 o C_2
            f, dg = _contract(f, axis, L)
            g[axis] += dg
        if p is not None:
            history.append(seminorm(f, p))
    else:
        raise RuntimeError("divergence-form iteration did not terminate")
    # the iteration tracks f^(k) - div g^(k) = f, hence the sign
    g = -g
    return (g, history) if p is not None else g


def divergence(g):
    """``D_{e1} g_1 + D_{e2} g_2`` with zero extension outside the box."""
    out = np.zeros(g.shape[1:])
    for axis in (0, 1):
        gp = np.pad(g[axis], [(0, 1) if a == axis else (0, 0) for a in (0, 1)])
        shifted = np.take(gp, np.arange(1, g.shape[1 + axis] + 1), axis=axis)
        out += shifted - g[axis]
    return out
