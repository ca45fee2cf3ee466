import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from gmrf_nng.cli import EXIT_OK, EXIT_USAGE, main
from gmrf_nng.exponent import constant_correlation_exponent, iid_exponent


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_exponent_grid_default_shape(capsys):
    code, out, _ = run(["exponent-grid", "--m", "0.5"], capsys)
    assert code == EXIT_OK
    table = rows(out)
    assert len(table) == 93
    assert list(table[0]) == ["K_db", "M", "a", "lambda", "D", "edge_term", "iid_term", "method", "error_estimate"]
    for r in table:
        K = 10 ** (float(r["K_db"]) / 10)
        if float(r["a"]) == 0:
            assert float(r["D"]) == pytest.approx(constant_correlation_exponent(K, 0.5), abs=1e-11)
        if math.isinf(float(r["a"])):
            assert float(r["D"]) == pytest.approx(iid_exponent(K), abs=1e-11)


def test_single_point_zero(capsys):
    code, out, _ = run(["exponent-grid", "--k-db", "0", "--m", "0", "--a", "0.5"], capsys)
    assert code == EXIT_OK
    assert float(rows(out)[0]["D"]) == 0.0


def test_exponent_grid_svg(tmp_path, capsys):
    out = tmp_path / "grid.csv"
    code, _, _ = run(["exponent-grid", "--k-db=-10:20:5", "--format", "csv+svg", "--out", str(out)], capsys)
    assert code == EXIT_OK
    svg = (tmp_path / "grid.svg").read_text()
    assert svg.startswith("<?xml") and "<svg" in svg
    first = (tmp_path / "grid.svg").read_bytes()
    run(["exponent-grid", "--k-db=-10:20:5", "--format", "csv+svg", "--out", str(out)], capsys)
    assert (tmp_path / "grid.svg").read_bytes() == first


@pytest.mark.parametrize(
    "argv",
    [
        ["exponent-grid", "--m", "1.5"],
        ["exponent-grid", "--a", "-1"],
        ["exponent-grid", "--lam", "0"],
        ["exponent-grid", "--k-db", "abc"],
        ["exponent-grid", "--format", "png"],
        ["exponent-grid", "--format", "csv+svg"],
        ["exponent-grid", "--family", "rational", "--a", "inf"],
        ["detect-sim", "--reps", "10"],
        ["detect-sim", "--alpha", "1.5"],
        ["detect-sim", "--alpha", "0.001"],
        ["spectrum", "--n", "1"],
        ["graph-dump"],
        ["no-such-command"],
        ["exponent-grid", "--bogus", "1"],
        ["exponent-grid", "--config", "/nonexistent/file.cfg"],
    ],
)
def test_bad_arguments_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == EXIT_USAGE
    assert err


def test_unwritable_output(capsys):
    code, _, err = run(["exponent-grid", "--k-db", "0", "--out", "/nonexistent/dir/x.csv"], capsys)
    assert code == EXIT_USAGE
    assert "cannot write" in err


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# grid settings\nk_db = 0,3  # two points\nm = 0.25\na = 0.5\n")
    code, out, _ = run(["exponent-grid", "--config", str(cfg)], capsys)
    assert code == EXIT_OK
    table = rows(out)
    assert [r["K_db"] for r in table] == ["0", "3"]
    assert {r["M"] for r in table} == {"0.25"}
    code, out, _ = run(["exponent-grid", "--config", str(cfg), "--m", "0.75"], capsys)
    assert {r["M"] for r in rows(out)} == {"0.75"}


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("reps = 5\n")
    code, _, err = run(["exponent-grid", "--config", str(cfg)], capsys)
    assert code == EXIT_USAGE and "reps" in err


def test_float_formatting(capsys):
    _, out, _ = run(["exponent-grid", "--k-db", "6.0206", "--m", "0.5", "--a", "0.5"], capsys)
    d = rows(out)[0]["D"]
    assert len(d.replace(".", "").lstrip("0")) <= 12


def test_spectrum_columns(capsys):
    code, out, _ = run(["spectrum", "--n", "200,400", "--reps", "4"], capsys)
    assert code == EXIT_OK
    table = rows(out)
    assert list(table[0]) == ["n", "reps", "mean", "stderr", "closed_form_D", "abs_gap"]
    assert [r["n"] for r in table] == ["200", "400"]


def test_spectrum_single_realization(capsys):
    _, out, _ = run(["spectrum", "--n", "300", "--single-realization", "true"], capsys)
    r = rows(out)[0]
    assert r["reps"] == "1" and r["stderr"] == "nan"


def test_detect_sim_columns(capsys):
    code, out, _ = run(["detect-sim", "--n", "8", "--reps", "1000", "--calibration-reps", "1000"], capsys)
    assert code == EXIT_OK
    r = rows(out)[0]
    assert list(r) == ["n", "alpha", "threshold", "p_miss", "ci_lo", "ci_hi", "minus_log_pm_over_n"]
    assert float(r["ci_lo"]) <= float(r["p_miss"]) <= float(r["ci_hi"])


def test_detect_sim_zero_miss_note(capsys):
    code, out, err = run(
        ["detect-sim", "--n", "64", "--k-db", "20", "--reps", "1000", "--calibration-reps", "1000"], capsys
    )
    assert code == EXIT_OK
    assert "lower bound" in err
    r = rows(out)[0]
    assert float(r["p_miss"]) == 0.0
    assert float(r["minus_log_pm_over_n"]) == pytest.approx(-math.log(float(r["ci_hi"])) / 64, rel=1e-10)


def test_geometry_stats(capsys):
    code, out, _ = run(["geometry-stats", "--n", "20000"], capsys)
    assert code == EXIT_OK
    r = rows(out)[0]
    assert list(r) == ["n", "lambda", "biroot_fraction", "edges_per_node", "ks_distance_nn_tail"]
    assert float(r["biroot_fraction"]) == pytest.approx(0.6215, abs=0.02)


def test_graph_dump(tmp_path, capsys):
    out = tmp_path / "g"
    code, _, _ = run(["graph-dump", "--n", "25", "--out", str(out), "--matrices", "true"], capsys)
    assert code == EXIT_OK
    points = (out / "points.csv").read_text().splitlines()
    edges = (out / "edges.csv").read_text().splitlines()
    assert points[0] == "id,x,y" and len(points) == 26
    assert edges[0] == "i,j,length,is_biroot"
    cov = np.loadtxt(out / "covariance.csv", delimiter=",", skiprows=1)[:, 1:]
    pot = np.loadtxt(out / "potential.csv", delimiter=",", skiprows=1)[:, 1:]
    np.testing.assert_allclose(cov @ pot, np.eye(25), atol=1e-9)
    for line in edges[1:]:
        i, j, length, b = line.split(",")
        assert int(i) < int(j) and float(length) > 0 and b in ("0", "1")


def test_validate_passes(capsys):
    code, out, _ = run(["validate"], capsys)
    assert code == EXIT_OK
    assert "FAIL" not in out
    assert out.strip().endswith("11/11 checks passed")


def test_validate_fails_on_broken_check(monkeypatch, capsys):
    from gmrf_nng import validation

    def broken(seed=0):
        return [validation.CheckResult("deliberately broken", 1.0, 0.5, False)]

    monkeypatch.setattr(validation, "CHECKS", validation.CHECKS + (broken,))
    code, out, _ = run(["validate"], capsys)
    assert code == 1
    assert "FAIL  deliberately broken" in out


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "gmrf_nng", "exponent-grid", "--k-db", "0", "--m", "0"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert res.returncode == 0
    assert res.stdout.startswith("K_db,")


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
