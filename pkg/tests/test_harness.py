import csv
import math

import numpy as np
import pytest

from latticebc.harness import (
    CSV_HEADER,
    ConvergenceRecord,
    StudyConfig,
    decay_profile,
    emit_plotdata,
    fit_rate,
    geometry_error,
    load_config,
    parse_plotdata,
    run_study,
)
from latticebc.schemes import make_problem, solve_dir


def records(ns, errors, scheme="dir", converged=None):
    conv = [True] * len(ns) if converged is None else converged
    return [
        ConvergenceRecord(scheme, "vacancy", k, n, e, e * e, 10, 0.0, c)
        for k, (n, e, c) in enumerate(zip(ns, errors, conv), start=4)
    ]


def test_emit_empty_is_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    emit_plotdata([], path)
    assert open(path).read() == ",".join(CSV_HEADER) + "\n"


def test_emit_rows_and_guides(tmp_path):
    recs = records([100, 400, 1600], [1e-2, 5e-3, 2.5e-3])
    path = tmp_path / "s.csv"
    emit_plotdata(recs, path)
    rows = list(csv.DictReader(open(path)))
    data = [r for r in rows if r["scheme"] == "dir"]
    guides = [r for r in rows if r["scheme"] == "guide"]
    assert len(data) == 3 and len(guides) == 3
    # the guide has the predicted slope -1/2 through the first record
    assert float(guides[2]["geom_error"]) == pytest.approx(1e-2 * 16**-0.5)
    assert parse_plotdata(path) == recs


def test_emit_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    recs = records([7, 19, 37, 61], rng.uniform(1e-9, 1, 4), converged=[True, False, True, True])
    path = tmp_path / "r.csv"
    emit_plotdata(recs, path, guides=False)
    assert parse_plotdata(path) == recs


def test_emit_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_plotdata([], tmp_path / "missing" / "out.csv")
    assert list(tmp_path.iterdir()) == []


def test_fit_rate_exact_power():
    ns = [100, 200, 400, 800]
    fit = fit_rate(records(ns, [1.0 / n for n in ns]))
    assert fit.slope == pytest.approx(-1.0, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0)
    fit = fit_rate(records(ns, [1.0 / n for n in ns]), "energy_error")
    assert fit.slope == pytest.approx(-2.0, abs=1e-9)


def test_fit_rate_log_factor():
    ns = [100, 200, 400, 800, 1600]
    fit = fit_rate(records(ns, [math.log(n) / n for n in ns]))
    assert -1.0 < fit.slope < -0.8


def test_fit_rate_needs_three_points():
    with pytest.raises(ValueError):
        fit_rate(records([10, 20], [0.1, 0.05]))
    with pytest.raises(ValueError):
        fit_rate(records([10, 20, 40, 80], [0.1, 0.05, 0.02, 0.01], converged=[True, False, True, False]))


def test_fit_rate_uses_longest_converged_run():
    ns = [10, 20, 40, 80, 160, 320]
    errs = [1.0, 9.0, 1 / 40, 1 / 80, 1 / 160, 1 / 320]
    fit = fit_rate(records(ns, errs, converged=[True, False, True, True, True, True]))
    assert fit.slope == pytest.approx(-1.0, abs=1e-9)
    assert fit.window == (6, 9)


def test_run_study_errors_decrease():
    cfg = StudyConfig(defect="interstitial", schemes=["dir"], k_ladder=[8, 16, 32], k_ref=64)
    recs = run_study(cfg)
    geo = [r.geom_error for r in recs]
    en = [r.energy_error for r in recs]
    assert geo[0] > geo[1] > geo[2] and en[0] > en[1] > en[2]
    assert all(r.converged for r in recs)
    assert [r.N for r in recs] == [3 * K * K + 3 * K + 2 for K in (8, 16, 32)]


def test_run_study_reference_size_gives_tiny_error():
    cfg = StudyConfig(defect="vacancy", schemes=["dir"], k_ladder=[12], k_ref=12)
    (rec,) = run_study(cfg)
    assert rec.geom_error <= 100 * cfg.tol
    assert rec.energy_error <= 100 * cfg.tol


def test_run_study_without_schemes():
    assert run_study(StudyConfig(defect="vacancy", schemes=[], k_ladder=[4, 5], k_ref=8)) == []


def test_config_defaults_and_validation(tmp_path):
    cfg = StudyConfig(defect="screw")
    assert cfg.k_ladder == [8, 12, 17, 25, 36] and cfg.k_ref == 110
    with pytest.raises(ValueError):
        StudyConfig(schemes=["fem"])
    with pytest.raises(ValueError):
        StudyConfig(k_ladder=[10, 20], k_ref=15)
    good = tmp_path / "ok.toml"
    good.write_text('defect = "vacancy"\nschemes = ["dir", "lin"]\nk_ladder = [4, 6]\nk_ref = 10\n')
    loaded = load_config(good)
    assert loaded.schemes == ["dir", "lin"] and loaded.k_ref == 10
    bad = tmp_path / "bad.toml"
    bad.write_text('defect = "vacancy"\nk_rev = 10\n')
    with pytest.raises(ValueError, match="k_rev"):
        load_config(bad)


def test_study_is_deterministic(tmp_path):
    cfg = StudyConfig(defect="vacancy", schemes=["dir", "per", "lin", "ac"], k_ladder=[3, 4, 5], k_ref=9, lin_outer=20,
                      record_timing=False)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_plotdata(run_study(cfg), a)
    emit_plotdata(run_study(cfg), b)
    assert a.read_bytes() == b.read_bytes()


def test_rate_independent_of_reference_size():
    slopes = []
    for k_ref in (128, 256):
        cfg = StudyConfig(defect="vacancy", schemes=["dir"], k_ladder=[8, 16, 32], k_ref=k_ref)
        slopes.append(fit_rate(run_study(cfg)).slope)
    assert abs(slopes[0] - slopes[1]) < 0.05


def test_geometry_error_against_itself_is_zero():
    sol = solve_dir(make_problem("vacancy"), 6)
    assert geometry_error(sol, sol) == 0.0


def test_decay_profile_zero_outside_support():
    sol = solve_dir(make_problem("vacancy"), 6)
    prof = decay_profile(sol, np.arange(1, 10))
    assert np.all(prof[:6] > 0)
    assert np.all(prof[7:] == 0)
