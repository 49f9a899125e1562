import csv
import subprocess
import sys

import pytest

from latticebc.cli import build_parser, main
from latticebc.harness import CSV_HEADER, parse_plotdata


def test_study_command(tmp_path, capsys):
    cfg = tmp_path / "study.toml"
    cfg.write_text('defect = "vacancy"\nschemes = ["dir", "per"]\nk_ladder = [3, 4, 5]\nk_ref = 9\n')
    out = tmp_path / "study.csv"
    assert main(["study", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    recs = parse_plotdata(out)
    assert [(r.scheme, r.K) for r in recs] == [(s, k) for s in ("dir", "per") for k in (3, 4, 5)]
    printed = capsys.readouterr().out
    assert "dir geom_error: slope" in printed


def test_study_missing_config(tmp_path, capsys):
    assert main(["study", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path / "o.csv")]) == 2
    assert "error" in capsys.readouterr().err


def test_study_bad_config(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('defect = "vacancy"\nschemes = ["magic"]\n')
    assert main(["study", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 2


def test_greens_command(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["greens", "--radius", "3", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0][:3] == ["l1", "l2", "rho"]
    assert len(rows) == 1 + 6 * 37


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["greens", "--out", "x.csv"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "latticebc", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("study", "greens", "check"):
        assert name in proc.stdout


def test_check_command(capsys):
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "checks passed" in out


def test_csv_header_columns():
    assert CSV_HEADER[:8] == ["scheme", "defect", "K", "N", "geom_error", "energy_error", "iterations", "wall_time_s"]
