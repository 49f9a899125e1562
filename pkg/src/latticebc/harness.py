"""Convergence studies: solve a K ladder, measure errors, fit rates, write CSV."""
from __future__ import annotations

import csv
import io
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .schemes import make_problem, solve_ac, solve_dir, solve_lin, solve_per, lin_outer

CSV_HEADER = ["scheme", "defect", "K", "N", "geom_error", "energy_error", "iterations", "wall_time_s", "converged"]
SCHEMES = ("dir", "per", "lin", "ac")
DEFAULT_LADDERS = {
    "point": ([6, 9, 13, 19, 28, 42], 128),
    "screw": ([8, 12, 17, 25, 36], 110),
}
# predicted exponents of (geometry error, energy error) in N
PREDICTED_RATES = {
    ("dir", "point"): (-0.5, -1.0),
    ("per", "point"): (-0.5, -1.0),
    ("lin", "point"): (-1.5, -2.0),
    ("ac", "point"): (-1.0, None),
    ("dir", "screw"): (-0.5, None),
    ("lin", "screw"): (-0.5, None),
    ("ac", "screw"): (-0.5, None),
}


@dataclass
class StudyConfig:
    defect: str = "vacancy"
    schemes: list = field(default_factory=lambda: ["dir"])
    k_ladder: list = None
    k_ref: int = None
    core_position: list = None
    shear_f: list = None
    tol: float = 1e-7
    seed: int = 0
    max_iter: int = 5000
    lin_outer: int = None
    ac_beta: float = None
    record_timing: bool = True

    def __post_init__(self):
        family = "screw" if self.defect == "screw" else "point"
        ladder, ref = DEFAULT_LADDERS[family]
        if self.k_ladder is None:
            self.k_ladder = list(ladder)
        if self.k_ref is None:
            self.k_ref = ref
        self.schemes = [s.lower() for s in self.schemes]
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")
        if self.k_ladder and max(self.k_ladder) > self.k_ref:
            raise ValueError("k_ref must be at least the largest K of the ladder")

    @property
    def family(self):
        return "screw" if self.defect == "screw" else "point"

    def problem(self):
        return make_problem(self.defect, core=self.core_position, shear=self.shear_f, tol=self.tol, max_iter=self.max_iter)


def load_config(path):
    """Read a flat TOML study description."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    known = {f.name for f in fields(StudyConfig)}
    extra = set(data) - known
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    return StudyConfig(**data)


@dataclass
class ConvergenceRecord:
    scheme: str
    defect: str
    K: int
    N: int
    geom_error: float
    energy_error: float
    iterations: int
    wall_time_s: float
    converged: bool = True


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple


# -- error metrics ---------------------------------------------------------------


def gradient_error(tri, values_a, values_b, mask=None):
    """``|| grad I(a - b) ||_L2`` over the triangles of ``tri`` (optionally masked)."""
    diff = np.asarray(values_a, dtype=float) - np.asarray(values_b, dtype=float)
    g = tri.gradient(diff.reshape(len(diff), -1))
    local = tri.areas * np.einsum("tma,tma->t", g, g)
    if mask is not None:
        local = local[mask]
    return float(math.sqrt(np.sum(local)))


def geometry_error(solution, reference):
    """Gradient error of ``solution`` against ``reference`` on the reference mesh."""
    if reference.mesh is not None:
        tri = reference.mesh.triangulation
    else:
        tri = reference.lattice.triangulation()
    u_ref = reference.values
    if solution.scheme == "per":
        lat = solution.lattice
        K = solution.K
        idx = lat.indices_of(tri.points)
        ref_coords = reference.lattice.coords
        inside = np.all(np.abs(ref_coords) <= K, axis=1) & (idx >= 0)
        sampled = np.zeros_like(u_ref)
        sampled[inside] = solution.values[idx[inside]]
        mask = np.all(inside[tri.triangles], axis=1)
        return gradient_error(tri, sampled, u_ref, mask)
    if solution.mesh is None and reference.mesh is None and len(solution.points) == len(tri.points):
        if np.array_equal(solution.points, tri.points):
            return gradient_error(tri, solution.values, u_ref)
    return gradient_error(tri, solution.sample(tri.points), u_ref)


# -- studies ---------------------------------------------------------------------

_SOLVERS = {"dir": solve_dir, "per": solve_per, "lin": solve_lin, "ac": solve_ac}


def reference_solution(config, scheme, problem=None):
    """High-resolution solution that ``scheme`` converges to.

    Truncation schemes compare with the truncated problem at ``k_ref``; the
    linearised exterior is compared with the fully nonlinear problem on the
    same outer hexagon; the coupled scheme with itself at ``k_ref``.
    """
    problem = config.problem() if problem is None else problem
    if scheme in ("dir", "per"):
        return solve_dir(problem, config.k_ref)
    if scheme == "lin":
        return solve_dir(problem, study_lin_outer(config))
    return solve_ac(problem, config.k_ref, beta=config.ac_beta)


def study_lin_outer(config):
    if config.lin_outer is not None:
        return int(config.lin_outer)
    return lin_outer(max(config.k_ladder))


def solve_scheme(config, scheme, K, problem=None):
    problem = config.problem() if problem is None else problem
    if scheme == "lin":
        return solve_lin(problem, K, outer=study_lin_outer(config))
    if scheme == "ac":
        return solve_ac(problem, K, beta=config.ac_beta)
    return _SOLVERS[scheme](problem, K)


def run_study(config, progress=None):
    """Solve every (scheme, K) pair of ``config`` and measure its errors."""
    problem = config.problem()
    records = []
    references = {}
    keys = ["dir" if s == "per" else s for s in config.schemes]
    for pos, scheme in enumerate(config.schemes):
        key = keys[pos]
        # references are large; keep only those still needed
        for stale in [k for k in references if k not in keys[pos:]]:
            del references[stale]
        if key not in references:
            references[key] = reference_solution(config, scheme, problem)
        ref = references[key]
        for K in config.k_ladder:
            start = time.perf_counter()
            sol = solve_scheme(config, scheme, K, problem)
            elapsed = time.perf_counter() - start
            rec = ConvergenceRecord(
                scheme=scheme,
                defect=config.defect,
                K=int(K),
                N=int(sol.n_inner),
                geom_error=geometry_error(sol, ref),
                energy_error=abs(sol.energy - ref.energy),
                iterations=int(sol.report.iterations),
                wall_time_s=round(elapsed, 3) if config.record_timing else 0.0,
                converged=bool(sol.report.converged),
            )
            records.append(rec)
            if progress is not None:
                progress(rec)
    return records


def fit_rate(records, field_name="geom_error"):
    """Least-squares slope of ``log(error)`` against ``log(N)``.

    Non-converged records are dropped; the fit uses the longest run of
    consecutive ladder entries that remain (at least three).
    """
    recs = sorted(records, key=lambda r: r.K)
    runs, current = [], []
    for r in recs:
        value = getattr(r, field_name)
        if r.converged and np.isfinite(value) and value > 0:
            current.append(r)
        else:
            if current:
                runs.append(current)
            current = []
    if current:
        runs.append(current)
    best = max(runs, key=len) if runs else []
    if len(best) < 3:
        raise ValueError("a rate fit needs at least three converged records")
    x = np.log([r.N for r in best])
    y = np.log([getattr(r, field_name) for r in best])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return RateFit(float(slope), float(intercept), float(r2), (best[0].K, best[-1].K))


def guide_rows(records):
    """Reference-rate lines anchored at the first record of each scheme."""
    out = []
    seen = {}
    for r in records:
        if r.scheme == "guide":
            continue
        seen.setdefault((r.scheme, r.defect), []).append(r)
    for (scheme, defect), recs in seen.items():
        family = "screw" if defect == "screw" else "point"
        rates = PREDICTED_RATES.get((scheme, family))
        if rates is None:
            continue
        first = recs[0]
        for r in recs:
            scale = r.N / first.N
            geo = first.geom_error * scale ** rates[0]
            en = first.energy_error * scale ** rates[1] if rates[1] is not None else float("nan")
            out.append(ConvergenceRecord("guide", defect, r.K, r.N, geo, en, 0, 0.0, True))
    return out


def _format(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def emit_plotdata(records, path, guides=True):
    """Write records (and rate guides) as long-format CSV, atomically."""
    rows = list(records) + (guide_rows(records) if guides else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        d = asdict(r)
        w.writerow([_format(d[k]) for k in CSV_HEADER])
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise OSError(f"cannot write {path}: directory does not exist")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".latticebc-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def parse_plotdata(path, include_guides=False):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected header in {path}: {reader.fieldnames}")
        out = []
        for row in reader:
            rec = ConvergenceRecord(
                scheme=row["scheme"],
                defect=row["defect"],
                K=int(row["K"]),
                N=int(row["N"]),
                geom_error=float(row["geom_error"]),
                energy_error=float(row["energy_error"]),
                iterations=int(row["iterations"]),
                wall_time_s=float(row["wall_time_s"]),
                converged=row["converged"] == "1",
            )
            if include_guides or rec.scheme != "guide":
                out.append(rec)
    return out


def decay_profile(solution, radii):
    """Largest nearest-neighbour gradient on each hexagonal shell.

    Returns ``max |u(l + rho) - u(l)|`` over sites ``l`` with hexagonal
    distance ``r`` and bonds ``rho``, for each ``r`` in ``radii``.
    """
    lat = solution.lattice
    u = solution.values
    d = np.linalg.norm((u[lat.nbr] - u[lat.owner]).reshape(len(lat.owner), -1), axis=1)
    hd = lat.hexdist[lat.owner]
    prof = np.zeros(len(radii))
    for k, r in enumerate(radii):
        sel = hd == r
        prof[k] = d[sel].max() if np.any(sel) else 0.0
    return prof


def decay_slope(solution, rmin=8, rmax=40):
    radii = np.arange(rmin, rmax + 1)
    prof = decay_profile(solution, radii)
    slope, _ = np.polyfit(np.log(radii), np.log(prof), 1)
    return float(slope), radii, prof
