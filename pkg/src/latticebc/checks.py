"""Property suites: derivative consistency, ghost forces, divergence form, determinism."""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .coupling import ac_model, ghost_force
from .greens import divergence, divergence_form
from .lattice import NN_VECTORS
from .potentials import AntiplanePotential, EamPotential
from .schemes import dir_model, lin_model, make_problem

OPPOSITE = np.array([3, 4, 5, 0, 1, 2])


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<34s} {self.value:10.3e}  (limit {self.threshold:.1e}) {self.detail}"


def _result(name, value, threshold, detail="", upper=True):
    ok = value <= threshold if upper else value >= threshold
    return CheckResult(name, bool(ok), float(value), float(threshold), detail)


# -- site potentials ---------------------------------------------------------------


def random_stencils(potential, n, rng):
    """Perturbed homogeneous stencils (EAM) or arbitrary bond differences (anti-plane)."""
    if potential.range_dim == 1:
        return rng.uniform(-1.0, 1.0, size=(n, 6))
    return NN_VECTORS[None] + rng.uniform(-0.15, 0.15, size=(n, 6, 2))


def potential_fd_errors(potential, n=1000, h=1e-5, seed=0):
    """Worst relative gradient and Hessian errors against central differences."""
    rng = np.random.default_rng(seed)
    worst_g = worst_h = 0.0
    for g in random_stencils(potential, n, rng):
        x = g.ravel()
        grad = np.asarray(potential.gradient(g)).ravel()
        hess = np.asarray(potential.hessian(g))
        if hess.ndim == 4:  # (bond, bond, m, m) blocks
            hess = np.transpose(hess, (0, 2, 1, 3))
        hess = hess.reshape(x.size, x.size)
        fd_g = np.empty(x.size)
        fd_h = np.empty((x.size, x.size))
        for k in range(x.size):
            e = np.zeros(x.size)
            e[k] = h
            xp, xm = (x + e).reshape(g.shape), (x - e).reshape(g.shape)
            fd_g[k] = (potential.energy(xp) - potential.energy(xm)) / (2 * h)
            fd_h[:, k] = (np.ravel(potential.gradient(xp)) - np.ravel(potential.gradient(xm))) / (2 * h)
        worst_g = max(worst_g, float(np.max(np.abs(grad - fd_g) / (1.0 + np.abs(grad)))))
        worst_h = max(worst_h, float(np.max(np.abs(hess - fd_h) / (1.0 + np.abs(hess)))))
    return worst_g, worst_h


def slip_invariance_error(n=200, seed=1):
    pot = AntiplanePotential()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        g = rng.uniform(-0.5, 0.5, 6)
        k = rng.integers(-3, 4, 6)
        worst = max(worst, abs(pot.energy(g + k) - pot.energy(g)))
    return worst


def point_symmetry_error(n=200, seed=2):
    """``V(-g_{-rho}) = V(g_rho)`` for both site potentials."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for pot in (EamPotential(), AntiplanePotential()):
        for g in random_stencils(pot, n, rng):
            flipped = -g[OPPOSITE]
            e = pot.energy(g)
            worst = max(worst, abs(pot.energy(flipped) - e) / max(1.0, abs(e)))
    return worst


# -- energy functionals --------------------------------------------------------------


def _small_models():
    vac = make_problem("vacancy")
    inter = make_problem("interstitial")
    screw = make_problem("screw", test=1)
    out = []
    for name, problem in (("vacancy", vac), ("interstitial", inter), ("screw", screw)):
        _, model, free = dir_model(problem, 3)
        out.append((f"dir/{name}", model, free, problem.range_dim))
    _, model, free = lin_model(vac, 2, 5)
    out.append(("lin/vacancy", model, free, 2))
    _, model, free = lin_model(screw, 2, 5)
    out.append(("lin/screw", model, free, 1))
    _, model, free = ac_model(vac, 3)
    out.append(("ac/vacancy", model, free, 2))
    _, model, free = ac_model(screw, 3)
    out.append(("ac/screw", model, free, 1))
    return out


def functional_fd_errors(n_dirs=20, h=1e-5, seed=3):
    """Directional FD errors of gradient and Hessian for small models of every scheme."""
    rng = np.random.default_rng(seed)
    rows = []
    for name, model, free, m in _small_models():
        mask = np.repeat(free, m).reshape(model.shape)
        u = np.where(mask, rng.normal(scale=0.02, size=model.shape), 0.0)
        _, grad = model.energy_and_gradient(u)
        worst_g = worst_h = 0.0
        for _ in range(n_dirs):
            v = np.where(mask, rng.normal(size=model.shape), 0.0)
            fd = (model.energy(u + h * v) - model.energy(u - h * v)) / (2 * h)
            an = float(np.sum(grad * v))
            worst_g = max(worst_g, abs(an - fd) / (1.0 + abs(an)))
            Hv = model.hessian_apply(u, v)
            fd_h = (model.gradient(u + h * v) - model.gradient(u - h * v)) / (2 * h)
            worst_h = max(worst_h, float(np.max(np.abs(Hv - fd_h))) / (1.0 + float(np.max(np.abs(Hv)))))
        rows.append((name, worst_g, worst_h))
    return rows


# -- divergence form -------------------------------------------------------------------


def random_mean_zero(rng, L=12, support=5):
    f = np.zeros((2 * L + 1, 2 * L + 1))
    i = np.arange(-L, L + 1)
    inside = np.maximum(np.abs(i)[:, None], np.abs(i)[None, :]) <= support
    vals = rng.normal(size=int(inside.sum()))
    f[inside] = vals - vals.mean()
    return f


def dipole_field(L=81):
    """Odd, hence mean-zero, field with ``|f(n)| ~ |n|^-4``, clipped to a box."""
    i = np.arange(-L, L + 1)
    n1, n2 = np.meshgrid(i, i, indexing="ij")
    r = np.hypot(n1, n2)
    return np.where(r > 0, n1 / np.maximum(r, 1.0) ** 5, 0.0)


def divergence_identity_error(n=100, seed=4):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        f = random_mean_zero(rng)
        g = divergence_form(f)
        worst = max(worst, float(np.max(np.abs(divergence(g) - f))))
    return worst


def divergence_decay(L=81, p=4):
    """Worst contraction ratio of the iterates and fitted decay slope of ``|g|``."""
    f = dipole_field(L)
    g, history = divergence_form(f, p=p)
    h = np.array(history)
    pairs = h[:-1] > 0
    ratio = float(np.max(h[1:][pairs] / h[:-1][pairs]))
    i = np.arange(-L, L + 1)
    R = np.maximum(np.abs(i)[:, None], np.abs(i)[None, :])
    amp = np.hypot(g[0], g[1])
    radii = np.arange(4, L // 3 + 1)
    prof = np.array([amp[R == r].max() for r in radii])
    slope = float(np.polyfit(np.log(radii), np.log(prof), 1)[0])
    return ratio, slope, float(np.max(np.abs(divergence(g) - f)))


# -- determinism ------------------------------------------------------------------------


def study_bytes(config):
    from .harness import emit_plotdata, run_study

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "study.csv")
        emit_plotdata(run_study(config), path)
        with open(path, "rb") as fh:
            return fh.read()


def determinism_check():
    from .harness import StudyConfig

    cfg = StudyConfig(defect="vacancy", schemes=["dir", "per", "ac"], k_ladder=[3, 4, 5], k_ref=9, record_timing=False)
    a, b = study_bytes(cfg), study_bytes(cfg)
    return a == b, len(a)


# -- suite ---------------------------------------------------------------------------------


def run_checks(progress=None):
    results = []

    def add(res):
        results.append(res)
        if progress is not None:
            progress(res)

    for pot in (EamPotential(), AntiplanePotential()):
        eg, eh = potential_fd_errors(pot)
        label = type(pot).__name__
        add(_result(f"fd gradient {label}", eg, 1e-6))
        add(_result(f"fd hessian {label}", eh, 1e-4))
    add(_result("slip invariance", slip_invariance_error(), 1e-12))
    add(_result("point symmetry", point_symmetry_error(), 1e-13))
    for name, eg, eh in functional_fd_errors():
        add(_result(f"fd energy {name}", eg, 1e-6))
        add(_result(f"fd hessian {name}", eh, 1e-4))
    add(_result("ghost force", ghost_force(), 1e-10))
    add(_result("divergence identity", divergence_identity_error(), 1e-12, "100 random inputs"))
    ratio, slope, ident = divergence_decay()
    add(_result("divergence contraction ratio", ratio, 3.0 ** (2 - 4) + 0.05))
    add(_result("divergence decay slope", slope, -2.7))
    same, size = determinism_check()
    add(CheckResult("byte-identical study csv", same, float(size), 0.0, "bytes"))
    return results
