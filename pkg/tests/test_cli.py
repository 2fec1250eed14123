import json
import subprocess
import sys

import numpy as np
import pytest

from al_lab import __version__
from al_lab.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, build_parser, main, resolve_config


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def data_rows(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


def test_spectrum_outputs(tmp_path):
    assert run(tmp_path, "spectrum", "--n", "6", "--a", "5", "--grid", "16") == EXIT_OK
    csv_text = (tmp_path / "spectrum.csv").read_text()
    assert f"# version = {__version__}" in csv_text and "# a = 5.0" in csv_text
    assert len(data_rows(tmp_path / "spectrum.csv")) == 1 + 32
    doc = json.loads((tmp_path / "points.json").read_text())
    assert doc["header"]["command"] == "spectrum"
    kinds = [p["kind"] for p in doc["data"]["catalog"]]
    assert kinds[1] == "double"


def test_spectrum_zero_state(tmp_path):
    assert run(tmp_path, "spectrum", "--zero-state", "--grid", "8") == EXIT_OK
    rows = data_rows(tmp_path / "spectrum.csv")[1:]
    for row in rows:
        _, zr, zi, dr, di, *_ = row.split(",")
        z = complex(float(zr), float(zi))
        assert complex(float(dr), float(di)) == pytest.approx(z**6 + z**-6, rel=1e-12)


def test_require_window_exit_code(tmp_path, capsys):
    assert run(tmp_path, "spectrum", "--a", "12", "--require-window") == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert "N tan(pi/N)" in err["message"] and "N tan(2 pi/N)" in err["message"]


def test_orbit_outputs(tmp_path):
    assert run(tmp_path, "orbit", "--samples", "11") == EXIT_OK
    asym = json.loads((tmp_path / "asymptotics.json").read_text())["data"]
    assert asym["fitted_decay_rate"] == pytest.approx(2 * asym["mu"], rel=0.01)
    assert len(data_rows(tmp_path / "orbit.csv")) == 1 + 11 * 6
    assert len(data_rows(tmp_path / "melnikov_vector.csv")) == 1 + 11 * 6


def test_orbit_other_ear_and_single_sample(tmp_path):
    assert run(tmp_path, "orbit", "--ear", "-1", "--t-range", "0", "0") == EXIT_OK
    rows = data_rows(tmp_path / "orbit.csv")
    assert len(rows) == 1 + 6
    a = tmp_path / "plus"
    assert main(["orbit", "--t-range", "0", "0", "--out", str(a)]) == EXIT_OK
    assert rows != data_rows(a / "orbit.csv")


def test_orbit_outside_window(tmp_path):
    assert run(tmp_path, "orbit", "--a", "2") == EXIT_CONFIG


def test_melnikov_outputs_and_determinism(tmp_path):
    args = ["melnikov", "--na", "3", "--ngamma", "6"]
    assert main([*args, "--out", str(tmp_path / "a"), "--threads", "1"]) == EXIT_OK
    assert main([*args, "--out", str(tmp_path / "b"), "--threads", "3"]) == EXIT_OK
    for name in ("kappa_scan.csv", "zero_surface.csv", "transversality.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = data_rows(tmp_path / "a" / "zero_surface.csv")[1:]
    assert rows and all(r.endswith(",ok") for r in rows)


def test_melnikov_a_equals_omega(tmp_path):
    assert run(tmp_path, "melnikov", "--a-equals-omega", "--na", "3", "--ngamma", "5") == EXIT_OK
    rows = [r.split(",") for r in data_rows(tmp_path / "kappa_scan.csv")[1:]]
    assert all(r[0] == r[2] for r in rows)


@pytest.mark.parametrize("alpha1,count", [("1", 4), ("8", 2)])
def test_resonance_fixed_point_count(tmp_path, alpha1, count):
    assert run(tmp_path, "resonance", "--alpha1", alpha1, "--alpha2", "1", "--omega", "1",
               "--ny", "5", "--nxi", "5", "--grid", "101") == EXIT_OK
    fps = json.loads((tmp_path / "fixed_points.json").read_text())["data"]
    assert len(fps) == count
    assert data_rows(tmp_path / "separatrix.csv")[0] == "contour_id,saddle_label,level,y,xi"


def test_resonance_boundary_case(tmp_path):
    assert run(tmp_path, "resonance", "--alpha1", "4.1", "--alpha2", "1") == EXIT_CONFIG


def test_evolve_outputs(tmp_path):
    assert run(tmp_path, "evolve", "--t-end", "0.1", "--z-samples", "0.5+0.5j", "1.5") == EXIT_OK
    rep = json.loads((tmp_path / "drift_report.json").read_text())["data"]
    names = [e["name"] for e in rep["invariants"]]
    assert names == ["delta_tilde[0]", "delta_tilde[1]", "F1", "I2"]
    assert all(e["relative_drift"] <= 1e-8 for e in rep["invariants"])


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "job.cfg"
    cfg.write_text("# job\na = 6.5\nn = 8\ngrid = 4\n")
    parser = build_parser()
    args = parser.parse_args(["spectrum", "--config", str(cfg), "--a", "7"])
    monkeypatch.setenv("AL_LAB_THREADS", "2")
    resolved = resolve_config(args, parser)
    assert resolved["a"] == 7.0 and resolved["n"] == 8 and resolved["grid"] == 4
    assert resolved["z_max"] == 3.0 and resolved["threads"] == 2


def test_config_errors(tmp_path, monkeypatch):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    assert run(tmp_path, "spectrum", "--config", str(bad)) == EXIT_CONFIG
    bad.write_text("a = five\n")
    assert run(tmp_path, "spectrum", "--config", str(bad)) == EXIT_CONFIG
    assert run(tmp_path, "spectrum", "--config", str(tmp_path / "missing.cfg")) == EXIT_CONFIG
    assert run(tmp_path, "spectrum", "--n", "2") == EXIT_CONFIG
    monkeypatch.setenv("AL_LAB_THREADS", "many")
    assert run(tmp_path, "spectrum") == EXIT_CONFIG


def test_config_booleans_and_lists(tmp_path):
    cfg = tmp_path / "job.cfg"
    cfg.write_text("zero_state = yes\ngrid = 4\n")
    assert run(tmp_path, "spectrum", "--config", str(cfg)) == EXIT_OK
    cfg.write_text("t_range = 0, 0\n")
    assert run(tmp_path, "orbit", "--config", str(cfg)) == EXIT_OK
    assert len(data_rows(tmp_path / "orbit.csv")) == 7


def test_verify_subset(tmp_path, capsys):
    assert main(["verify", "--only", "1", "11", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 2 and all("[PASS]" in l for l in out)
    assert json.loads((tmp_path / "verify.json").read_text())["data"][0]["number"] == 1


def test_verify_reports_failure(tmp_path, capsys):
    assert main(["verify", "--only", "9", "--out", str(tmp_path)]) == EXIT_NUMERICAL
    err = capsys.readouterr().err
    assert json.loads(err)["failed"][0]["number"] == 9


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "al_lab", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
