"""Acceptance checks shared by the test suite and the ``check`` subcommand.

Each check returns a CriterionResult. ``scale="full"`` runs the stated
sizes; ``scale="quick"`` shrinks Monte Carlo sizes for smoke runs and is
labelled as such in the result detail.
"""

from __future__ import annotations

import filecmp
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .asymptotics import frechet_hessian_fd, j_mu_quadrature, psi_mu
from .experiments import (
    ExperimentConfig,
    residual_decay_suite,
    run_clt_experiment,
    run_experiment,
    vol_A_delta_probe,
)
from .errors import UnsupportedManifold
from .frechet import consistency_probe
from .geometry import Circle, ProjectivePlane, Sphere, Torus
from .measures import SHIPPED_MODELS, ProjectedMixture, make_rng, reference_point, shipped_model


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number}: {self.name} ({self.seconds:.1f}s)"

    def to_json(self):
        return {"number": self.number, "name": self.name, "passed": self.passed, "detail": self.detail}


def _timed(number, name, fn, budget=None):
    t0 = time.perf_counter()
    passed, detail = fn()
    dt = time.perf_counter() - t0
    if budget is not None:
        detail["runtime_budget_s"] = budget
        detail["within_budget"] = dt < budget
        passed = passed and dt < budget
    return CriterionResult(number, name, bool(passed), detail, dt)


# --------------------------------------------------------------------------
# 1. geometry invariants

GEOMETRY_KINDS = (Circle(), Torus(2), Torus(3), Sphere(2), Sphere(3), ProjectivePlane())


def _random_tangent(kind, x, rng, max_len):
    E = kind.frame(x)
    u = rng.standard_normal(kind.dim)
    u /= np.linalg.norm(u)
    tc = float(kind.cut_time(x, u))
    return (u @ E), u, min(tc, max_len)


def geometry_trials(kind, trials=1000, seed=0):
    """Worst-case errors of the geometry invariants over seeded random trials."""
    rng = make_rng(seed, 1, kind.ambient_dim, kind.dim)
    X = kind.uniform_sample(rng, trials)
    worst = {"round_trip": 0.0, "distance": 0.0, "isometry": 0.0, "composition": 0.0,
             "two_branch_min": 0.0, "two_branch_gap": 0.0}
    for x in X:
        V, u, tc = _random_tangent(kind, x, rng, np.inf)
        t = rng.uniform(0.0, tc - 1e-3)
        y = kind.exp(x, t * V)
        L = kind.log(x, y[None, :])[0]
        worst["round_trip"] = max(worst["round_trip"], float(np.linalg.norm(L - t * V)))
        worst["distance"] = max(worst["distance"], abs(float(kind.dist(x, y[None, :])[0]) - t))
        # inner products under transport
        A = kind.from_frame(x, rng.standard_normal((2, kind.dim)))
        TA = kind.transport(x, y, A)
        worst["isometry"] = max(worst["isometry"], float(np.max(np.abs(TA @ TA.T - A @ A.T))))
        # composition along one minimal segment x -> y -> z
        s = rng.uniform(0.0, t)
        ym = kind.exp(x, s * V)
        two = kind.transport(ym, y, kind.transport(x, ym, A))
        worst["composition"] = max(worst["composition"], float(np.max(np.abs(two - TA))))
        # two-branch functions near a random chart point
        try:
            charts = kind.cut_structure_charts(x)
        except UnsupportedManifold:
            charts = []
        if charts:
            ch = charts[int(rng.integers(len(charts)))]
            lo = np.array([a for a, _ in ch.domain]) if ch.param_dim else np.zeros(0)
            hi = np.array([b for _, b in ch.domain]) if ch.param_dim else np.zeros(0)
            P = rng.uniform(lo + 0.1, hi - 0.1)[None, :] if ch.param_dim else np.zeros((1, 0))
            yc = ch.points(P)[0]
            p1, p2 = ch.branch_distances(yc[None, :], P[0] if ch.param_dim else None)
            worst["two_branch_gap"] = max(worst["two_branch_gap"], abs(float(p1[0] - p2[0])))
            Ec = kind.frame(yc)
            w = rng.standard_normal(kind.dim)
            w *= rng.uniform(0.0, 0.5 * ch.radius) / np.linalg.norm(w)
            Y = kind.exp(yc, w @ Ec)[None, :]
            if ch.in_neighborhood(Y)[0]:
                p1, p2 = ch.branch_distances(Y, P[0] if ch.param_dim else None)
                err = abs(min(p1[0], p2[0]) - float(kind.dist(x, Y)[0]))
                worst["two_branch_min"] = max(worst["two_branch_min"], err)
    return worst


GEOMETRY_TOL = {"round_trip": 1e-9, "distance": 1e-10, "isometry": 1e-10, "composition": 1e-9,
                "two_branch_min": 1e-10, "two_branch_gap": 1e-10}


def criterion_geometry(trials=1000, seed=0):
    def run():
        detail = {}
        ok = True
        for kind in GEOMETRY_KINDS:
            w = geometry_trials(kind, trials, seed)
            detail[kind.name] = w
            ok = ok and all(w[k] <= GEOMETRY_TOL[k] for k in w)
        detail["tolerances"] = GEOMETRY_TOL
        return ok, detail

    return _timed(1, "geometry invariants", run, budget=60.0)


# --------------------------------------------------------------------------
# 2. closed forms of J


def torus_j_oracle(model):
    """2 pi int psi(pi, y2) dy2 and 2 pi int psi(y1, pi) dy1 by adaptive quadrature."""
    x0 = model.declared_mean

    def line(axis):
        def f(t):
            y = np.array(x0, dtype=float)
            y[axis] = math.pi
            y[1 - axis] = x0[1 - axis] + t
            return float(model.pdf(y[None, :])[0])

        return 2.0 * math.pi * quad(f, -math.pi, math.pi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]

    # the normal along the first axis comes from the hypersurface {y1 = pi}
    return np.diag([line(0), line(1)])


def criterion_j_closed_forms():
    def run():
        d = {}
        circ = shipped_model("circle")
        jc = float(j_mu_quadrature(circ, circ.declared_mean)[0, 0])
        ref = 2.0 * math.pi * float(circ.pdf(np.array([[math.pi]]))[0])
        d["circle"] = {"J": jc, "closed_form": ref, "error": abs(jc - ref)}
        tor = shipped_model("torus2")
        jt = j_mu_quadrature(tor, tor.declared_mean)
        rt = torus_j_oracle(tor)
        d["torus2"] = {"J": jt.tolist(), "oracle": rt.tolist(), "error": float(np.max(np.abs(jt - rt)))}
        unif = ProjectedMixture([0.0, 0.0, 1.0], 1.0, 1.0)
        x0 = np.array([0.0, 0.0, 1.0])
        jr = j_mu_quadrature(unif, x0)
        d["rp2_uniform"] = {"J": jr.tolist(), "error": float(np.max(np.abs(jr - math.pi / 4 * np.eye(2))))}
        zeros = {}
        for name in ("sphere2", "sphere3"):
            m = shipped_model(name)
            zeros[name] = bool(np.all(j_mu_quadrature(m, m.declared_mean) == 0.0))
        d["sphere_zero"] = zeros
        ok = (
            d["circle"]["error"] <= 1e-15 * max(1.0, ref)
            and d["torus2"]["error"] <= 1e-8
            and d["rp2_uniform"]["error"] <= 1e-8
            and all(zeros.values())
        )
        return ok, d

    return _timed(2, "J closed forms", run)


# --------------------------------------------------------------------------
# 3. Psi against the finite-difference Hessian of F


def criterion_psi_oracle(names=tuple(SHIPPED_MODELS)):
    def run():
        d = {}
        ok = True
        for name in names:
            m = shipped_model(name)
            P = psi_mu(m).Psi
            H = frechet_hessian_fd(m, m.declared_mean, h=1e-3)
            err = float(np.linalg.norm(2.0 * P - H) / np.linalg.norm(H))
            d[name] = {"two_psi": (2.0 * P).tolist(), "fd_hessian": H.tolist(), "relative_error": err}
            ok = ok and err <= 1e-3
        return ok, d

    return _timed(3, "Psi finite-difference oracle", run, budget=300.0)


# --------------------------------------------------------------------------
# 4. residual decay


def criterion_residual_decay(names=("circle", "torus2", "sphere2", "rp2")):
    def run():
        d = {}
        ok = True
        for name in names:
            res = residual_decay_suite(shipped_model(name))
            d[name] = {
                "passed": res["passed"],
                "flagged": res["flagged"],
                "linearization_ratios": [r["ratios"] for r in res["linearization"]],
                "expansion_ratios": [r["ratios"] for r in res["expansion"]],
            }
            ok = ok and res["passed"]
        return ok, d

    return _timed(4, "residual decay", run, budget=120.0)


# --------------------------------------------------------------------------
# 5. Monte Carlo CLT


def criterion_clt(names=("circle", "sphere2", "torus2", "rp2"), n=2000, replicates=None, seed=2024, scale="full"):
    def run():
        d = {"scale": scale}
        ok = True
        for name in names:
            cfg = ExperimentConfig(model=SHIPPED_MODELS[name], n_grid=[n], replicates=replicates, seed=seed)
            rep = run_clt_experiment(cfg)
            row = rep.clt[0]
            d[name] = {k: row[k] for k in ("replicates", "failures", "covariance", "standard_errors", "z_scores",
                                          "within_band", "mean_norm", "mean_bound")}
            d[name]["Sigma"] = rep.prediction["Sigma"]
            ok = ok and row["within_band"] and row["mean_norm"] <= row["mean_bound"]
        return ok, d

    return _timed(5, "Monte Carlo CLT covariance", run, budget=1800.0 if scale == "full" else None)


# --------------------------------------------------------------------------
# 6. cut-set volume probes


def criterion_volume(mc_points=400_000, seed=11):
    def run():
        d = {}
        ok = True
        for kind in (Circle(), Torus(2), ProjectivePlane()):
            res = vol_A_delta_probe(kind, reference_point(kind), [0.05, 0.1, 0.2], mc_points, seed)
            d[kind.name] = res
            ok = ok and res["slope_ok"] and all(r["within_band"] for r in res["rows"])
        return ok, d

    return _timed(6, "cut-set volume probes", run)


# --------------------------------------------------------------------------
# 7. consistency


def criterion_consistency(names=tuple(SHIPPED_MODELS), n_grid=(100, 1000, 10000), replicates=20, seed=7):
    def run():
        d = {}
        ok = True
        for name in names:
            tab = consistency_probe(shipped_model(name), list(n_grid), replicates, seed)
            d[name] = tab.to_json()
            ok = ok and tab.monotone_decreasing
        return ok, d

    return _timed(7, "consistency of sample means", run)


# --------------------------------------------------------------------------
# 8. reproducibility


def criterion_reproducibility(tmpdir, seed=5):
    def run():
        paths = []
        for k in range(2):
            p = os.path.join(tmpdir, f"report_{k}.json")
            cfg = ExperimentConfig(
                model=SHIPPED_MODELS["sphere2"], n_grid=[50], replicates=100, seed=seed,
                checks=["clt", "volume", "residual", "consistency"], mc_points=20_000,
                consistency_replicates=3, output=p,
            )
            run_experiment(cfg)
            paths.append(p)
        same = filecmp.cmp(paths[0], paths[1], shallow=False)
        return same, {"files": paths, "identical": same}

    return _timed(8, "byte-identical reruns", run)


def run_all(tmpdir, scale="quick"):
    """Every criterion; quick scale shrinks the Monte Carlo sizes."""
    quick = scale == "quick"
    out = [
        criterion_geometry(trials=200 if quick else 1000),
        criterion_j_closed_forms(),
        criterion_psi_oracle(("circle", "torus2", "sphere2", "rp2") if quick else tuple(SHIPPED_MODELS)),
        criterion_residual_decay(),
        criterion_clt(n=2000 if not quick else 200, replicates=None if not quick else 300, scale=scale),
        criterion_volume(mc_points=400_000 if not quick else 100_000),
        criterion_consistency(
            names=tuple(SHIPPED_MODELS) if not quick else ("circle", "sphere2"),
            n_grid=(100, 1000, 10000) if not quick else (100, 1000),
            replicates=20 if not quick else 8,
        ),
        criterion_reproducibility(tmpdir),
    ]
    return out
