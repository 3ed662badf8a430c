import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from frechet_clt.errors import CutLocusData, EmptyData, InvalidConfiguration, KindMismatch, SolverFailure
from frechet_clt.frechet import (
    FrechetObjective,
    SolverOptions,
    circle_exact_mean,
    consistency_probe,
    frechet_gradient_field,
    frechet_mean,
    frechet_value,
    uniqueness_evidence,
)
from frechet_clt.geometry import Circle, ManifoldPoint, ProjectivePlane, Sphere, Torus
from frechet_clt.measures import SampleSet, UniformMixtureVonMises, make_rng, sample, shipped_model

PI = math.pi


def _circle_obj(angles):
    return FrechetObjective(Circle(), points=np.asarray(angles, dtype=float)[:, None])


def _pt(kind, coords):
    return ManifoldPoint.from_raw(kind, coords)


# -- frechet_value --------------------------------------------------------


@pytest.mark.parametrize("kind,coords", [
    (Circle(), [1.0]),
    (Torus(2), [0.3, -2.0]),
    (Sphere(2), [0.0, 0.6, 0.8]),
    (ProjectivePlane(), [0.6, 0.0, 0.8]),
])
def test_single_point_value_zero(kind, coords):
    obj = FrechetObjective(kind, points=[coords])
    x = _pt(kind, coords)
    assert frechet_value(obj, x) == 0.0
    assert np.all(frechet_gradient_field(obj, x).components == 0.0)


@pytest.mark.parametrize("a", [0.1, 0.7, 1.5])
def test_two_symmetric_points(a):
    obj = _circle_obj([a, -a])
    x = _pt(Circle(), [0.0])
    assert frechet_value(obj, x) == pytest.approx(a * a, abs=1e-15)
    assert frechet_gradient_field(obj, x).components[0] == pytest.approx(0.0, abs=1e-16)


def test_midpoint_stationary():
    obj = _circle_obj([0.3, 0.5])
    assert frechet_gradient_field(obj, _pt(Circle(), [0.4])).components[0] == pytest.approx(0.0, abs=1e-16)


@pytest.mark.parametrize("x", [-2.5, 0.0, 1.0, 3.0])
def test_circle_uniform_population_value(x):
    oracle = quad(lambda t: t * t / (2 * PI), -PI, PI)[0]
    assert oracle == pytest.approx(PI**2 / 3, rel=1e-14)
    obj = FrechetObjective.from_model(UniformMixtureVonMises(0.0, 1.0, 1.0))
    assert frechet_value(obj, _pt(Circle(), [x])) == pytest.approx(oracle, rel=1e-10)


def test_empty_and_mismatch():
    with pytest.raises(EmptyData):
        FrechetObjective(Circle(), points=np.zeros((0, 1)))
    with pytest.raises(InvalidConfiguration):
        FrechetObjective(Circle())
    obj = _circle_obj([0.0])
    with pytest.raises(KindMismatch):
        frechet_value(obj, _pt(Sphere(2), [0, 0, 1]))
    with pytest.raises(InvalidConfiguration):
        FrechetObjective.from_sample(np.zeros((3, 1)))


@pytest.mark.parametrize("name", ["circle", "torus2", "sphere2", "rp2", "sphere3"])
def test_value_bounded_by_squared_diameter(name):
    m = shipped_model(name)
    k = m.kind
    s = sample(m, 200, 3)
    obj = FrechetObjective.from_sample(s)
    if isinstance(k, Torus):
        diam = PI * math.sqrt(k.dim)
    else:
        diam = PI if isinstance(k, Sphere) else PI / 2
    for x in k.uniform_sample(make_rng(4), 20):
        assert 0.0 <= obj.value(x) <= diam**2 + 1e-12


def test_gradient_cut_data_reported():
    obj = _circle_obj([0.2, PI, -1.0])
    with pytest.raises(CutLocusData) as exc:
        frechet_gradient_field(obj, _pt(Circle(), [0.0]))
    assert exc.value.indices == [1]


def test_evaluate_excludes_cut_points(caplog):
    obj = _circle_obj([0.2, PI])
    F, G, idx = obj.evaluate(np.array([0.0]))
    assert idx.tolist() == [1]
    assert F == pytest.approx((0.04 + PI**2) / 2)
    assert G[0] == pytest.approx(0.1)


def test_cache_returns_same_values():
    s = sample(shipped_model("sphere2"), 50, 1)
    a = FrechetObjective.from_sample(s, cache=True)
    b = FrechetObjective.from_sample(s)
    x = np.array([0.0, 0.6, 0.8])
    assert a.evaluate(x)[0] == a.evaluate(x)[0] == b.evaluate(x)[0]


# -- gradient versus finite differences ----------------------------------


@pytest.mark.parametrize("name", ["circle", "torus2", "sphere2", "rp2", "sphere3"])
def test_gradient_matches_finite_differences(name):
    m = shipped_model(name)
    k = m.kind
    rng = make_rng(21, k.dim)
    obj = FrechetObjective.from_sample(sample(m, 30, 5))
    h, done = 1e-5, 0
    while done < 100:
        x = k.uniform_sample(rng, 1)[0]
        if np.min(k.cut_margin(x, obj.points)) < 1e-2:
            continue
        u = rng.standard_normal(k.dim) @ k.frame(x)
        u /= np.linalg.norm(u)
        fd = (obj.value(k.exp(x, h * u)) - obj.value(k.exp(x, -h * u))) / (2 * h)
        assert obj.gradient(x) @ u == pytest.approx(-0.5 * fd, abs=1e-6)
        done += 1


def test_population_gradient_at_declared_mean():
    for name in ("circle", "torus2", "sphere2", "rp2"):
        m = shipped_model(name)
        G = FrechetObjective.from_model(m).gradient(m.declared_mean)
        assert np.linalg.norm(G) < 1e-12


# -- frechet_mean ---------------------------------------------------------


@pytest.mark.parametrize("kind,coords", [
    (Circle(), [2.0]),
    (Torus(2), [0.3, -2.0]),
    (Sphere(2), [0.0, 0.6, 0.8]),
    (ProjectivePlane(), [0.6, 0.0, 0.8]),
])
def test_mean_of_single_point(kind, coords):
    res = frechet_mean(FrechetObjective(kind, points=[coords]))
    np.testing.assert_allclose(res.mean.coords, kind.canonicalize(np.asarray(coords, float)), atol=1e-12)
    assert res.objective == pytest.approx(0.0, abs=1e-24)


def test_circle_three_symmetric_points():
    res = frechet_mean(_circle_obj([-PI / 2, 0.0, PI / 2]))
    assert res.method == "circle-exact"
    assert res.mean.coords[0] == pytest.approx(0.0, abs=1e-15)
    assert not res.tie_detected


def _colatitude_triangle(theta):
    az = np.array([0.0, 2 * PI / 3, 4 * PI / 3])
    return np.column_stack([np.sin(theta) * np.cos(az), np.sin(theta) * np.sin(az), np.full(3, np.cos(theta))])


def test_sphere_symmetric_triangle():
    pts = _colatitude_triangle(0.3)
    obj = FrechetObjective(Sphere(2), points=pts)
    res = frechet_mean(obj)
    np.testing.assert_allclose(res.mean.coords, [0, 0, 1], atol=1e-10)
    # grid search oracle
    grid = Sphere(2).uniform_sample(make_rng(31), 20000)
    assert res.objective <= min(obj.value(g) for g in grid)
    assert res.objective == pytest.approx(0.09, rel=1e-12)


@pytest.mark.parametrize("name", ["torus2", "sphere2", "rp2", "sphere3"])
def test_result_invariants(name):
    m = shipped_model(name)
    obj = FrechetObjective.from_sample(sample(m, 100, 8))
    res = frechet_mean(obj)
    assert res.gradient_norm <= 1e-8
    assert res.objective == pytest.approx(obj.value(res.mean.coords), abs=1e-12)
    assert res.starts == 3 ** m.kind.dim
    payload = res.to_json()
    assert payload["iterations"] == res.iterations and payload["method"] == "multistart"


def test_circle_exact_agrees_with_multistart():
    rng = make_rng(2024, 500)
    # the default 3-point lattice misses the global basin on diffuse data
    opts = SolverOptions(exact_circle=False, grid_points=65, grid_radius=PI)
    m = shipped_model("circle")
    worst = 0.0
    for r in range(500):
        n = int(rng.integers(1, 51))
        pts = sample(m, n, 500, r).points if r % 2 else rng.uniform(-PI, PI, size=(n, 1))
        obj = FrechetObjective(Circle(), points=pts)
        a = frechet_mean(obj).mean.coords
        b = frechet_mean(obj, opts).mean.coords
        worst = max(worst, float(Circle().dist(a, b[None, :])[0]))
    assert worst <= 1e-8


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3.1, 3.1), min_size=1, max_size=40))
def test_circle_exact_is_global(angles):
    t = np.array(angles)
    xm, F, _, _ = circle_exact_mean(t)
    grid = np.linspace(-PI, PI, 4001)
    Fg = np.array([np.mean(((t - g + PI) % (2 * PI) - PI) ** 2) for g in grid])
    assert F <= Fg.min() + 1e-12


def test_circle_tie_is_lexicographic():
    obj = _circle_obj([0.0, PI])
    res = frechet_mean(obj)
    assert res.tie_detected
    assert res.mean.coords[0] == pytest.approx(-PI / 2, abs=1e-15)
    again = frechet_mean(obj)
    assert again.mean.coords.tobytes() == res.mean.coords.tobytes()


def test_torus_tie_is_lexicographic():
    # three equally spaced points on one axis: each data point is a global minimiser
    pts = [[0.0, 0.0], [2 * PI / 3, 0.0], [-2 * PI / 3, 0.0]]
    obj = FrechetObjective(Torus(2), points=pts)
    opts = SolverOptions(grid_points=9, grid_radius=PI)
    res = frechet_mean(obj, opts)
    assert res.tie_detected
    np.testing.assert_allclose(res.mean.coords, [-2 * PI / 3, 0.0], atol=1e-9)
    assert res.objective == pytest.approx(8 * PI**2 / 27, rel=1e-12)
    assert frechet_mean(obj, opts).mean.coords.tobytes() == res.mean.coords.tobytes()


@pytest.mark.parametrize("name", ["torus2", "sphere2", "rp2"])
def test_mean_is_deterministic(name):
    s = sample(shipped_model(name), 60, 17)
    a = frechet_mean(FrechetObjective.from_sample(s))
    b = frechet_mean(FrechetObjective.from_sample(SampleSet(s.kind, s.points.copy(), 17)))
    assert a.mean.coords.tobytes() == b.mean.coords.tobytes()
    assert a.to_json() == b.to_json()


@pytest.mark.parametrize("name", ["torus2", "sphere2", "rp2"])
def test_accepted_steps_decrease_objective(name):
    s = sample(shipped_model(name), 80, 6)
    res = frechet_mean(FrechetObjective.from_sample(s), SolverOptions(record_trace=True))
    assert res.trace
    for F, Fn, rule in res.trace:
        if rule == "armijo":
            assert Fn < F
        else:
            assert rule == "noise" and abs(Fn - F) <= 1e-13 * (1 + abs(F))
    assert sum(r == "armijo" for _, _, r in res.trace) >= 1


def test_flat_step_is_exact():
    # with eta = 1/2 a single step reaches the mean on a flat chart
    pts = np.array([[0.1, 0.2], [0.3, -0.4], [-0.2, 0.5]])
    res = frechet_mean(FrechetObjective(Torus(2), points=pts), SolverOptions(record_trace=True))
    np.testing.assert_allclose(res.mean.coords, pts.mean(axis=0), atol=1e-15)


def test_solver_failure_when_budget_too_small():
    s = sample(shipped_model("sphere2"), 40, 2)
    with pytest.raises(SolverFailure) as exc:
        frechet_mean(FrechetObjective.from_sample(s), SolverOptions(max_iter=1, merge_radius=0.0))
    assert "gradient_norms" in exc.value.diagnostics


def test_population_mean_is_declared_mean():
    m = shipped_model("rp2")
    res = frechet_mean(FrechetObjective.from_model(m))
    np.testing.assert_allclose(res.mean.coords, m.declared_mean, atol=1e-9)


# -- diagnostics ----------------------------------------------------------


def test_consistency_decreasing_von_mises():
    m = UniformMixtureVonMises(0.0, 2.0, 0.0)
    t = consistency_probe(m, [100, 1000, 10000], 20, seed=7)
    q = [r["q95"] for r in t.rows]
    med = [r["median"] for r in t.rows]
    assert q[0] > q[1] > q[2] and med[0] > med[1] > med[2]
    assert t.monotone_decreasing and t.kendall_tau == pytest.approx(-1.0)


def test_consistency_concentrated():
    m = UniformMixtureVonMises(0.0, 200.0, 0.0)
    t = consistency_probe(m, [100, 1000], 10, seed=3)
    assert all(r["q95"] <= 0.05 for r in t.rows)


def test_consistency_single_row():
    t = consistency_probe(shipped_model("circle"), [100], 1, seed=1)
    assert len(t.rows) == 1 and t.rows[0]["replicates"] == 1
    assert math.isnan(t.kendall_tau)


def test_consistency_needs_declared_mean():
    with pytest.raises(InvalidConfiguration):
        consistency_probe(UniformMixtureVonMises(0.0, 1.0, 1.0), [100], 1, seed=1)


@pytest.mark.parametrize("name", ["circle", "torus2", "sphere2", "rp2"])
def test_uniqueness_grid_evidence(name):
    ev = uniqueness_evidence(shipped_model(name), points_per_dim=20)
    assert ev["declared_is_lowest"]
