import csv
import json
import math

import numpy as np
import pytest

import frechet_clt.experiments as ex
from frechet_clt.errors import ExperimentInvalid, InvalidConfiguration, SolverFailure, VersionError
from frechet_clt.experiments import (
    FORMAT_VERSION,
    ExperimentConfig,
    ExperimentReport,
    covariance_stats,
    cut_set_bound,
    cut_set_volume,
    export_replicates_csv,
    load_report,
    persist_report,
    residual_decay_suite,
    run_clt_experiment,
    run_experiment,
    vol_A_delta_probe,
)
from frechet_clt.geometry import Circle, ProjectivePlane, Sphere, Torus
from frechet_clt.measures import SHIPPED_MODELS, UniformMixtureVonMises, make_rng, shipped_model

PI = math.pi


def _cfg(name="circle", **kw):
    kw.setdefault("n_grid", [50])
    kw.setdefault("replicates", 100)
    kw.setdefault("seed", 3)
    return ExperimentConfig(model=SHIPPED_MODELS[name], **kw)


# -- configuration --------------------------------------------------------


@pytest.mark.parametrize("kw", [
    {"n_grid": [5]},
    {"deltas": [1.0]},
    {"deltas": [0.0]},
    {"checks": ["bogus"]},
    {"replicates": 0},
])
def test_config_validation(kw):
    with pytest.raises(InvalidConfiguration):
        _cfg(**kw)


def test_config_default_replicates():
    c = ExperimentConfig(model=SHIPPED_MODELS["circle"])
    assert c.resolved_replicates(1) == 5000 and c.resolved_replicates(2) == 2000
    assert c.n_grid == [500, 2000, 8000]


def test_config_from_json():
    c = ExperimentConfig.from_json({"model": SHIPPED_MODELS["rp2"], "seed": 4})
    assert c.seed == 4
    with pytest.raises(InvalidConfiguration):
        ExperimentConfig.from_json({"seed": 4})
    with pytest.raises(InvalidConfiguration):
        ExperimentConfig.from_json({"model": {}, "colour": "red"})


def test_echo_ignores_workers():
    assert _cfg(workers=1).echo() == _cfg(workers=4).echo()


# -- reports --------------------------------------------------------------


def test_persist_load_round_trip(tmp_path):
    rep = run_clt_experiment(_cfg())
    path = tmp_path / "r.json"
    persist_report(rep, path)
    back = load_report(path)
    assert back == rep
    assert back.to_json() == json.loads(path.read_text())


def test_unknown_version(tmp_path):
    path = tmp_path / "r.json"
    path.write_text(json.dumps({"format_version": "frechet-clt-report/0", "config": {}}))
    with pytest.raises(VersionError):
        load_report(path)
    path.write_text("[1, 2]")
    with pytest.raises(VersionError):
        load_report(path)
    path.write_text("{")
    with pytest.raises(VersionError):
        load_report(path)


def test_empty_report(tmp_path):
    out = tmp_path / "empty.json"
    rep = run_experiment(_cfg(checks=[], output=str(out)))
    d = json.loads(out.read_text())
    assert d["format_version"] == FORMAT_VERSION
    assert d["clt"] == [] and d["volume"] is None and d["residual"] is None
    assert load_report(out) == rep
    assert rep.passed()


def test_reproducible_bytes(tmp_path):
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    run_experiment(_cfg("sphere2", n_grid=[30, 60], checks=["clt", "volume"], mc_points=20_000, output=str(a)))
    run_experiment(_cfg("sphere2", n_grid=[30, 60], checks=["clt", "volume"], mc_points=20_000, output=str(b)))
    run_experiment(_cfg("sphere2", n_grid=[30, 60], checks=["clt", "volume"], mc_points=20_000, output=str(c),
                        workers=2))
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_csv_export(tmp_path):
    rep = run_clt_experiment(_cfg("torus2", n_grid=[20, 40], replicates=12))
    path = tmp_path / "w.csv"
    export_replicates_csv(rep, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["n", "replicate", "w0", "w1"]
    assert len(rows) == 1 + 24
    W = np.array([[float(v) for v in r[2:]] for r in rows[1:13]])
    np.testing.assert_array_equal(W, rep.replicates[20]["w"])


# -- CLT ------------------------------------------------------------------


@pytest.mark.parametrize("name", list(SHIPPED_MODELS))
def test_hundred_replicates_mean_bound(name):
    rep = run_clt_experiment(_cfg(name, n_grid=[40]))
    row = rep.clt[0]
    assert row["replicates"] == 100 and row["failures"] == 0
    assert row["mean_norm"] <= row["mean_bound"]
    S = np.array(row["covariance"])
    np.testing.assert_array_equal(S, S.T)
    assert min(row["covariance_eigenvalues"]) >= 0


def test_few_replicates_skip_comparison():
    rep = run_clt_experiment(_cfg(replicates=10))
    row = rep.clt[0]
    assert row["within_band"] is None and "z_scores" not in row
    assert rep.passed()


def test_error_ordering_recorded():
    rep = run_clt_experiment(_cfg(n_grid=[20, 200]))
    assert isinstance(rep.metadata["error_ordering_within_band"], bool)


def test_failure_cap(monkeypatch):
    real = ex.sample_mean_coords
    calls = {"n": 0}

    def flaky(kind, points, options=None):
        calls["n"] += 1
        if calls["n"] % 50 == 0:
            raise SolverFailure("injected")
        return real(kind, points, options)

    monkeypatch.setattr(ex, "sample_mean_coords", flaky)
    with pytest.raises(ExperimentInvalid):
        run_clt_experiment(_cfg(replicates=100))


def test_failures_below_cap_are_counted(monkeypatch):
    real = ex.sample_mean_coords
    calls = {"n": 0}

    def flaky(kind, points, options=None):
        calls["n"] += 1
        if calls["n"] == 7:
            raise SolverFailure("injected")
        return real(kind, points, options)

    monkeypatch.setattr(ex, "sample_mean_coords", flaky)
    rep = run_clt_experiment(_cfg(replicates=100))
    assert rep.clt[0]["failures"] == 1 and rep.clt[0]["failed_indices"] == [6]
    assert rep.clt[0]["replicates"] == 99


def test_clt_needs_declared_mean():
    cfg = ExperimentConfig(model=UniformMixtureVonMises(0.0, 1.0, 1.0).to_config(), n_grid=[20], replicates=5)
    with pytest.raises(InvalidConfiguration):
        run_clt_experiment(cfg)


def test_covariance_stats_gaussian():
    Sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
    W = make_rng(5).multivariate_normal([0, 0], Sigma, size=20_000)
    st = covariance_stats(W, Sigma)
    assert st["within_band"]
    assert st["relative_frobenius_error"] < 0.05
    assert np.all(np.abs(st["skewness_z"]) < 4) and np.all(np.abs(st["kurtosis_z"]) < 4)
    np.testing.assert_allclose(st["covariance"], np.cov(W.T), rtol=1e-12)
    # standard error of a variance entry is about sqrt(2/R) * sigma^2
    assert st["standard_errors"][0][0] == pytest.approx(math.sqrt(2 / 20_000) * 2.0, rel=0.1)


def test_covariance_stats_detects_mismatch():
    W = make_rng(6).normal(size=(5000, 1))
    assert not covariance_stats(W, [[1.5]])["within_band"]


def test_clt_circle_small_scale():
    # at n = 2000 the variance sits close to the non-standard prediction
    rep = run_clt_experiment(_cfg(n_grid=[2000], replicates=1000, seed=2024))
    assert rep.clt[0]["within_band"]


# -- volume probe ---------------------------------------------------------


def test_closed_forms():
    assert cut_set_volume(Circle(), 0.1) == pytest.approx(0.2)
    assert cut_set_volume(Torus(2), 0.1) == pytest.approx(4 * PI * 0.2 - 0.04)
    assert cut_set_volume(Torus(2), 0.1) <= cut_set_bound(Torus(2), 0.1) == pytest.approx(0.8 * PI)
    assert cut_set_volume(ProjectivePlane(), 0.3) == pytest.approx(2 * PI * math.sin(0.3))
    # spherical cap area 2 pi (1 - cos delta)
    assert cut_set_volume(Sphere(2), 0.3) == pytest.approx(2 * PI * (1 - math.cos(0.3)), rel=1e-12)


@pytest.mark.parametrize("kind,x0", [
    (Circle(), [0.7]),
    (Torus(2), [0.0, 1.0]),
    (ProjectivePlane(), [0.0, 0.0, 1.0]),
    (Sphere(2), [0.0, 0.6, 0.8]),
])
def test_volume_probe(kind, x0):
    deltas = [0.02, 0.05, 0.1, 0.2]
    res = vol_A_delta_probe(kind, x0, deltas, 200_000, seed=1)
    assert all(r["within_band"] for r in res["rows"])
    if isinstance(kind, Sphere):
        # a point cut locus gives quadratic growth
        exact = np.polyfit(np.log(deltas), np.log([cut_set_volume(kind, d) for d in deltas]), 1)[0]
        assert abs(res["slope"] - exact) < 0.15
        assert not res["slope_ok"]
    else:
        assert res["slope_ok"]


def test_volume_probe_bound_torus():
    res = vol_A_delta_probe(Torus(2), [0.0, 0.0], [0.05, 0.1], 100_000, seed=2)
    for r in res["rows"]:
        assert r["estimate"] <= 8 * PI * r["delta"]


# -- residual decay -------------------------------------------------------


def test_residual_circle():
    rep = residual_decay_suite(shipped_model("circle"), directions=2)
    for row in rep["linearization"]:
        assert row["ratios"][-1] <= 0.05 * row["ratios"][0]
        assert row["monotone"]
    assert rep["passed"] and rep["flagged"] == 0
    assert all(r["jump_norm"] == pytest.approx(2 * PI) for r in rep["expansion"])


def test_residual_flat_pure_case():
    m = UniformMixtureVonMises(0.0, 50.0, 0.0)
    m.declared_mean = np.array([0.0])
    rep = residual_decay_suite(m, directions=2)
    for row in rep["linearization"]:
        assert max(row["remainders"]) < 1e-12


def test_residual_sphere():
    rep = residual_decay_suite(shipped_model("sphere2"), directions=8)
    for row in rep["linearization"] + rep["expansion"]:
        assert row["monotone"]
    assert rep["passed"]


def test_residual_projective():
    rep = residual_decay_suite(shipped_model("rp2"), directions=4)
    assert rep["passed"]
    assert all(r["chart_rho_kappa"] == pytest.approx(PI) for r in rep["expansion"])


def test_passed_aggregates_flags():
    rep = ExperimentReport({})
    assert rep.passed()
    rep.clt = [{"within_band": True}, {"within_band": None}]
    assert rep.passed()
    rep.residual = {"passed": False}
    assert not rep.passed()
