import json
import subprocess
import sys

import numpy as np
import pytest

from carrying_simplex import __version__
from carrying_simplex.cli import main
from carrying_simplex.simplex import read_family, read_mesh_csv

LOGISTIC = {"family": "lv_smooth", "d": 2, "T": 1.0,
            "params": {"r": [1.0, 1.0], "a": [[1.0, 0.0], [0.0, 1.0]]}}
LV = {"family": "lv_smooth", "d": 2, "T": 1.0,
      "params": {"r": [1.0, 1.0], "a": [[1.0, 0.5], [0.5, 1.0]]}}
SEASONAL_ZERO = {"family": "lv_seasonal", "T": 1.0,
                 "params": {"lambda": [3, 3], "phi": 0.5, "r": [3, 3],
                            "a": [[1, 0.5], [0.5, 1]]}}
COOPERATIVE = {"family": "lv_smooth", "T": 1.0,
               "params": {"r": [1.0, 1.0], "a": [[1.0, -0.2], [-0.2, 1.0]]}}


@pytest.fixture
def write_spec(tmp_path):
    def _write(doc, name="spec.json"):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return str(p)
    return _write


def test_check_exit_codes(write_spec, capsys, tmp_path):
    assert main(["check", "--spec", write_spec(LOGISTIC)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["meta"]["version"] == __version__ and len(doc["meta"]["config_hash"]) == 16
    assert [r["hypothesis"] for r in doc["reports"]] == ["H2", "H3tilde", "H4", "H4strict"]
    assert main(["check", "--spec", write_spec(SEASONAL_ZERO)]) == 1
    doc = json.loads(capsys.readouterr().out)
    assert doc["reports"][0]["values"] == [0.0, 0.0]
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["check", "--spec", str(bad)]) == 3
    assert main(["check", "--spec", str(tmp_path / "missing.json")]) == 3
    assert main(["check", "--spec", write_spec({"family": "lv_smooth"})]) == 3


def test_invalid_parameters(write_spec):
    assert main(["simplex", "--spec", write_spec(LOGISTIC), "--tol", "0"]) == 3
    assert main(["simplex", "--spec", write_spec(LOGISTIC), "--mesh-res", "0"]) == 3
    assert main(["simulate", "--spec", write_spec(LOGISTIC), "--x0", "1,2,3"]) == 3


def test_simplex_outputs_are_reproducible(write_spec, tmp_path):
    spec = write_spec(LOGISTIC)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["simplex", "--spec", spec, "--out", str(out), "--mesh-res", "64",
                     "--sections", "4"]) == 0
    names = ["sigma0.csv", "gap_history.csv", "summary.json", "sections/index.json",
             "sections/section_002.csv"]
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert summary["converged"] and summary["final_gap"] < 1e-3
    assert summary["meta"]["config_hash"] in (outs[0] / "sigma0.csv").read_text()
    assert json.loads((outs[0] / "timing.json").read_text())["runtime_seconds"] > 0
    hist = (outs[0] / "gap_history.csv").read_text().splitlines()
    assert hist[1] == "iter,gap,delta_lower,delta_upper"
    sig = read_mesh_csv(outs[0] / "sigma0.csv")
    np.testing.assert_allclose(sig.R, 1.0 / sig.grid.nodes.max(axis=1), atol=1e-3)
    assert len(read_family(outs[0] / "sections")) == 4


def test_autonomous_sections(write_spec, tmp_path):
    out = tmp_path / "o"
    assert main(["simplex", "--spec", write_spec(LV), "--out", str(out), "--sections", "8"]) == 0
    fam = read_family(out / "sections")
    assert len(fam) == 8
    for mesh in fam.meshes:
        assert np.max(np.abs(mesh.R - fam.meshes[0].R)) < 1e-3


def test_hypothesis_gate_and_force(write_spec, tmp_path, capsys):
    spec = write_spec(COOPERATIVE)
    assert main(["simplex", "--spec", spec, "--out", str(tmp_path / "g")]) == 1
    assert not (tmp_path / "g" / "sigma0.csv").exists()
    capsys.readouterr()
    out = tmp_path / "f"
    assert main(["simplex", "--spec", spec, "--out", str(out), "--force"]) == 0
    assert "hypotheses-unverified" in (out / "sigma0.csv").read_text().splitlines()[0]
    assert json.loads((out / "summary.json").read_text())["meta"]["stamp"] == \
        "hypotheses-unverified"


def test_nonconverged_partial_outputs(write_spec, tmp_path):
    out = tmp_path / "p"
    assert main(["simplex", "--spec", write_spec(LV), "--out", str(out),
                 "--max-iters", "3"]) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "partial" and not summary["converged"]
    assert "partial" in (out / "sigma0.csv").read_text().splitlines()[0]


def test_verify_and_export(write_spec, tmp_path, capsys):
    spec = write_spec(LV)
    out = tmp_path / "v"
    assert main(["simplex", "--spec", spec, "--out", str(out), "--mesh-res", "64"]) == 0
    capsys.readouterr()
    code = main(["verify", "--spec", spec, "--out", str(out), "--mesh-res", "64",
                 "--starts", "10", "--pairs", "200"])
    reports = json.loads(capsys.readouterr().out)
    names = [r["check"] for r in reports]
    assert "unordered_strict" in names and "conjugacy" in names
    by_name = {r["check"]: r for r in reports}
    assert by_name["unordered_weak"]["status"] == "pass"
    assert by_name["lipschitz_projection"]["status"] == "pass"
    assert code == (0 if all(r["status"] == "pass" for r in reports) else 1)
    assert all(r["meta"]["seed"] == 0 for r in reports)
    assert main(["export", "--spec", spec, "--out", str(out)]) == 0
    lines = (out / "export" / "sigma0_original.dat").read_text().splitlines()
    assert lines[1] == "# s x1 x2" and len(lines) == 2 + 65 + 1


def test_simulate_and_poincare(write_spec, tmp_path, capsys):
    spec = write_spec(LOGISTIC)
    assert main(["simulate", "--spec", spec, "--t1", "1", "--n", "3", "--x0", "0.5,0.5"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[1] == "t,x1,x2" and len(rows) == 5
    assert abs(float(rows[-1].split(",")[1]) - 0.7310585786300049) < 1e-9
    assert main(["poincare", "--spec", spec, "--n", "2", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "poincare.csv").read_text().splitlines()
    assert rows[1] == "n,x1,x2" and len(rows) == 5


def test_axes(write_spec, capsys):
    assert main(["axes", "--spec", write_spec(LV)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [abs(a["xhat"] - 1.0) < 1e-8 for a in doc["axes"]] == [True, True]


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "carrying_simplex.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
