import json
import math
import subprocess
import sys

import numpy as np
import pytest

from frechet_clt.asymptotics import psi_mu
from frechet_clt.cli import main
from frechet_clt.experiments import ExperimentConfig, load_report, run_experiment
from frechet_clt.frechet import FrechetObjective, frechet_mean
from frechet_clt.measures import SHIPPED_MODELS, sample, shipped_model

PI = math.pi


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _json(text):
    return json.loads(text)


# -- geom -----------------------------------------------------------------


def test_geom_distance(capsys):
    code, out, _ = run(capsys, "geom", "--kind", "circle", "--op", "distance", "--x", "0", "--y", "1.5707963")
    assert code == 0
    assert _json(out)["result"] == pytest.approx(PI / 2, abs=1e-7)


@pytest.mark.parametrize("kind,expected", [("sphere2", PI), ("rp2", PI / 2), ("circle", PI), ("torus2", PI)])
def test_geom_cut_time(capsys, kind, expected):
    code, out, _ = run(capsys, "geom", "--kind", kind, "--op", "cut_time")
    assert code == 0
    assert _json(out)["result"] == pytest.approx(expected, rel=1e-12)


def test_geom_exp_log(capsys):
    code, out, _ = run(capsys, "geom", "--kind", "sphere2", "--op", "exp", "--x", "0,0,1", "--v", "[0.3, 0.4]")
    assert code == 0
    y = _json(out)["result"]["coords"]
    code, out, _ = run(capsys, "geom", "--kind", "sphere2", "--op", "log", "--x", "0,0,1", "--y", json.dumps(y))
    assert code == 0
    np.testing.assert_allclose(_json(out)["result"]["components"], [0.3, 0.4], atol=1e-12)


def test_geom_transport_and_structure(capsys):
    code, out, _ = run(capsys, "geom", "--kind", "torus2", "--op", "transport", "--x", "0,0", "--y", "1,1",
                       "--v", "0.5,-0.5")
    assert code == 0 and _json(out)["result"]["components"] == [0.5, -0.5]
    code, out, _ = run(capsys, "geom", "--kind", "rp2", "--op", "cut_structure")
    assert code == 0 and _json(out)["param_dims"] == [1]
    code, out, _ = run(capsys, "geom", "--kind", "sphere2", "--op", "cut_structure")
    assert code == 0 and _json(out)["charts"] == []


def test_geom_cut_locus_error(capsys):
    code, out, err = run(capsys, "geom", "--kind", "circle", "--op", "log", "--x", "0", "--y", "3.141592653589793")
    assert code == 3 and out == ""
    e = _json(err)
    assert e["error"] == "CutLocusError"
    assert sorted(c[0] for c in e["details"]["candidates"]) == pytest.approx([-PI, PI])


def test_geom_tolerance_flag(capsys):
    code, _, _ = run(capsys, "geom", "--kind", "circle", "--op", "log", "--x", "0", "--y", "3.1", "--tolerance", "0.1")
    assert code == 3
    code, _, _ = run(capsys, "geom", "--kind", "circle", "--op", "log", "--x", "0", "--y", "3.1")
    assert code == 0


@pytest.mark.parametrize("argv", [
    ["geom", "--kind", "circle"],
    ["geom", "--kind", "circle", "--op", "distance", "--x", "0"],
    ["geom", "--kind", "circle", "--op", "exp"],
    ["geom", "--kind", "circle", "--op", "distance", "--x", "zero", "--y", "1"],
    ["bogus"],
    [],
    ["simulate", "--model", "circle"],
    ["predict", "--model", "{not json"],
    ["mean", "--input", "/nonexistent/file.csv"],
    ["predict", "--model", "circle", "--out", "/nonexistent/dir/out.json"],
])
def test_usage_errors(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2 and out == ""
    assert _json(err)["error"] == "UsageError"


@pytest.mark.parametrize("argv", [
    ["geom", "--kind", "hyperbolic2", "--op", "cut_time"],
    ["geom", "--kind", "torus2", "--op", "distance", "--x", "0", "--y", "0,0"],
    ["geom", "--kind", "sphere2", "--op", "distance", "--x", "1,1,0", "--y", "0,0,1"],
    ["predict", "--model", json.dumps({"density": {"variant": "Nope"}})],
])
def test_domain_errors(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 3 and out == ""
    assert "message" in _json(err)


# -- golden equivalence with library calls --------------------------------


def test_mean_matches_library(capsys, tmp_path):
    s = sample(shipped_model("rp2"), 80, 12)
    path = tmp_path / "s.csv"
    path.write_text(s.to_csv())
    out_path = tmp_path / "mean.json"
    code, out, _ = run(capsys, "mean", "--input", str(path), "--out", str(out_path))
    assert code == 0 and out == ""
    lib = frechet_mean(FrechetObjective.from_sample(s)).to_json()
    assert _json(out_path.read_text()) == json.loads(json.dumps(lib))


def test_mean_circle_exact(capsys, tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("x0\n-1.5707963267948966\n0.0\n1.5707963267948966\n")
    code, out, _ = run(capsys, "mean", "--input", str(path), "--kind", "circle")
    assert code == 0
    assert _json(out)["mean"]["coords"] == [0.0]


def test_predict_circle(capsys):
    code, out, _ = run(capsys, "predict", "--model", "circle")
    assert code == 0
    d = _json(out)
    m = shipped_model("circle")
    psi_pi = float(m.pdf(np.array([[PI]]))[0])
    assert d["Psi"][0][0] == pytest.approx(1 - 2 * PI * psi_pi, abs=1e-10)
    assert d == json.loads(json.dumps(psi_mu(m).to_json()))


def test_predict_from_file_and_base_point(capsys, tmp_path):
    cfg = tmp_path / "model.json"
    cfg.write_text(json.dumps(SHIPPED_MODELS["sphere2"]))
    code, out, _ = run(capsys, "predict", "--model", str(cfg), "--x", "0,0,1")
    assert code == 0
    assert set(_json(out)) >= {"J", "Psi", "V0", "Sigma", "eigenvalues"}


def test_simulate_matches_library(capsys, tmp_path):
    out_path = tmp_path / "rep.json"
    csv_path = tmp_path / "w.csv"
    code, _, _ = run(capsys, "simulate", "--model", "circle", "--seed", "9", "--n", "30", "60", "--replicates", "10",
                     "--out", str(out_path), "--csv", str(csv_path))
    assert code == 0
    rep = load_report(out_path)
    assert len(rep.clt) == 2 and rep.clt[0]["replicates"] == 10
    lib = run_experiment(ExperimentConfig(model=SHIPPED_MODELS["circle"], n_grid=[30, 60], replicates=10, seed=9))
    assert rep.to_json() == json.loads(json.dumps(lib.to_json()))
    assert len(csv_path.read_text().splitlines()) == 21


def test_simulate_workers_do_not_change_output(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    base = ["simulate", "--model", "torus2", "--seed", "1", "--n", "40", "--replicates", "8"]
    assert run(capsys, *base, "--out", str(a))[0] == 0
    assert run(capsys, *base, "--workers", "2", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_failed_check_exits_one(capsys, monkeypatch):
    import frechet_clt.experiments as ex

    monkeypatch.setitem(ex.DEFAULT_TOLERANCES, "slope_low", 5.0)
    code, out, _ = run(capsys, "simulate", "--model", "circle", "--seed", "1", "--n", "20", "--replicates", "5",
                       "--checks", "volume")
    assert code == 1
    assert _json(out)["volume"]["slope_ok"] is False


def test_check_quick(capsys, tmp_path):
    out_path = tmp_path / "check.json"
    code, _, err = run(capsys, "check", "--out", str(out_path))
    d = _json(out_path.read_text())
    assert code == 0 and d["failed"] == 0 and d["passed"] == 8
    assert sum(line.startswith("[PASS]") for line in err.splitlines()) == 8


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "frechet_clt", "geom", "--kind", "rp2", "--op", "cut_time"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["result"] == pytest.approx(PI / 2)
    res = subprocess.run([sys.executable, "-m", "frechet_clt", "simulate", "--model", "circle"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 2
