"""Preconditioned L-BFGS minimisation and lowest-eigenvalue checks."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import line_search
from scipy.sparse import linalg as splinalg

from .potentials import DeformationError


@dataclass
class SolveReport:
    iterations: int
    final_residual_inf: float
    converged: bool
    energy: float
    wall_time: float
    message: str = ""


class _Cache:
    """Evaluate energy and gradient together and remember the last point."""

    def __init__(self, fun):
        self.fun = fun
        self.x = None
        self.value = None
        self.evals = 0

    def __call__(self, x):
        if self.x is None or not np.array_equal(x, self.x):
            self.evals += 1
            try:
                self.value = self.fun(x)
            except DeformationError:
                self.value = (np.inf, np.full_like(x, np.nan))
            self.x = x.copy()
        return self.value

    def f(self, x):
        return self(x)[0]

    def g(self, x):
        return self(x)[1]


def laplacian_preconditioner(matrix, shift=0.0):
    """Factorise an SPD (or shifted semi-definite) matrix for repeated solves."""
    A = sparse.csc_matrix(matrix)
    if shift:
        A = A + shift * sparse.identity(A.shape[0], format="csc")
    return splinalg.factorized(A)


def minimize(objective, x0, free=None, precond=None, tol=1e-7, max_iter=5000, memory=10, max_step=None):
    """Minimise ``objective`` with a preconditioned L-BFGS iteration.

    Parameters
    ----------
    objective : callable
        Maps the flattened field to ``(energy, gradient)``.
    x0 : ndarray
        Starting field; frozen entries keep their values.
    free : bool ndarray, optional
        Mask of free entries of the flattened field.
    precond : callable, optional
        Applies the inverse preconditioner to a vector of free entries.
    max_step : float, optional
        Upper bound on the largest entry change of a single step.

    Returns
    -------
    x : ndarray
        Final field (same shape as ``x0``).
    report : SolveReport
    """
    start = time.perf_counter()
    x_full = np.array(x0, dtype=float).ravel()
    free = np.ones(x_full.size, dtype=bool) if free is None else np.asarray(free, dtype=bool).ravel()
    apply_p = precond if precond is not None else (lambda v: v)

    def fun(x):
        y = x_full.copy()
        y[free] = x
        e, g = objective(y)
        return e, np.asarray(g).ravel()[free]

    cache = _Cache(fun)
    x = x_full[free]
    f, g = cache(x)
    if not np.isfinite(f):
        raise DeformationError(-1, 0.0)
    S, Y, R = [], [], []
    gamma = 1.0
    f_old = None
    it = 0
    message = "converged"
    while True:
        res = float(np.max(np.abs(g))) if g.size else 0.0
        if res <= tol:
            converged = True
            break
        if it >= max_iter:
            converged, message = False, "maximum number of iterations reached"
            break
        p = -_two_loop(g, S, Y, R, gamma, apply_p)
        if np.dot(p, g) >= 0:
            S, Y, R = [], [], []
            p = -apply_p(g)
        amax = None
        if max_step is not None:
            amax = max_step / max(float(np.max(np.abs(p))), 1e-300)
        alpha, f_new, g_new = _line_search(cache, x, p, f, g, f_old, amax)
        if alpha is None and S:
            S, Y, R = [], [], []
            p = -apply_p(g)
            if max_step is not None:
                amax = max_step / max(float(np.max(np.abs(p))), 1e-300)
            alpha, f_new, g_new = _line_search(cache, x, p, f, g, None, amax)
        if alpha is None:
            converged, message = False, "line search failed"
            break
        s = alpha * p
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-300:
            S.append(s)
            Y.append(y)
            R.append(1.0 / sy)
            if len(S) > memory:
                S.pop(0), Y.pop(0), R.pop(0)
            gamma = sy / float(np.dot(y, apply_p(y)))
        x = x + s
        f_old, f, g = f, f_new, g_new
        it += 1
    x_full[free] = x
    report = SolveReport(
        iterations=it,
        final_residual_inf=res,
        converged=converged,
        energy=float(f),
        wall_time=time.perf_counter() - start,
        message=message,
    )
    return x_full.reshape(np.shape(x0)), report


def _two_loop(g, S, Y, R, gamma, apply_p):
    q = g.copy()
    a = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(R)):
        ai = r * np.dot(s, q)
        q -= ai * y
        a.append(ai)
    z = gamma * apply_p(q) if S else apply_p(q)
    for (s, y, r), ai in zip(zip(S, Y, R), reversed(a)):
        b = r * np.dot(y, z)
        z += s * (ai - b)
    return z


def _line_search(cache, x, p, f, g, f_old, amax):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        alpha, *_ = line_search(cache.f, cache.g, x, p, gfk=g, old_fval=f, old_old_fval=f_old,
                                c1=1e-4, c2=0.9, amax=amax if amax is not None else 50.0, maxiter=20)
    if alpha is not None:
        f_new, g_new = cache(x + alpha * p)
        if np.isfinite(f_new) and f_new <= f + 1e-14 * max(1.0, abs(f)):
            return alpha, f_new, g_new
    # backtracking fallback; near convergence the energy is at round-off
    # level, so a step that lowers the residual is accepted as well
    slope = float(np.dot(g, p))
    alpha = 1.0 if amax is None else min(1.0, amax)
    res = float(np.max(np.abs(g)))
    for _ in range(40):
        f_new, g_new = cache(x + alpha * p)
        if np.isfinite(f_new):
            if f_new <= f + 1e-4 * alpha * slope:
                return alpha, f_new, g_new
            noise = 1e-13 * max(1.0, abs(f))
            if f_new <= f + noise and float(np.max(np.abs(g_new))) < res:
                return alpha, f_new, g_new
        alpha *= 0.5
    return None, f, g


def lowest_eigenvalue(H, dim=None, tol=1e-8):
    """Smallest eigenvalue of a symmetric matrix or operator.

    Dense input is handled by a full eigensolve; sparse input by shift-invert
    Lanczos with a shift below the Gershgorin bound.  Returns
    ``(value, converged)``.
    """
    if isinstance(H, np.ndarray):
        return float(np.linalg.eigvalsh(H)[0]), True
    if sparse.issparse(H):
        H = sparse.csc_matrix(H)
        n = H.shape[0]
        if n <= 400:
            return float(np.linalg.eigvalsh(H.toarray())[0]), True
        d = H.diagonal()
        off = np.asarray(abs(H).sum(axis=1)).ravel() - np.abs(d)
        sigma = float(np.min(d - off)) - 1.0
        try:
            val = splinalg.eigsh(H, k=1, sigma=sigma, which="LM", tol=tol, return_eigenvectors=False)
            return float(val[0]), True
        except splinalg.ArpackNoConvergence:
            return float("nan"), False
    op = H if isinstance(H, splinalg.LinearOperator) else splinalg.LinearOperator((dim, dim), matvec=H)
    try:
        val = splinalg.eigsh(op, k=1, which="SA", tol=tol, return_eigenvectors=False, maxiter=20 * op.shape[0])
        return float(val[0]), True
    except splinalg.ArpackNoConvergence:
        return float("nan"), False
