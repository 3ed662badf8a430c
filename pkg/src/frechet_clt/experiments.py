"""Monte Carlo CLT experiments, decay tables, cut-set volume probes and
versioned JSON reports."""

from __future__ import annotations

import csv
import json
import math
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy
from scipy.integrate import quad

from . import __version__
from .asymptotics import (
    crossing_directions,
    expansion_configuration,
    linearization_residual,
    psi_mu,
    ray_directions,
    transport_expansion_check,
)
from .errors import ExperimentInvalid, InvalidConfiguration, SolverFailure, VersionError
from .frechet import consistency_probe, sample_mean_coords
from .geometry import ProjectiveSpace, Sphere, Torus
from .measures import GENERATOR_ID, make_rng, model_from_config, reference_point, sample

FORMAT_VERSION = "frechet-clt-report/1"
WORKERS_ENV = "FRECHET_CLT_WORKERS"
CHECKS = ("clt", "volume", "residual", "consistency")

DEFAULT_TOLERANCES = {
    "se_band": 3.0,
    "failure_cap": 0.01,
    "decay_factor": 20.0,
    "slope_low": 0.9,
    "slope_high": 1.1,
    # remainders at or below this are rounding noise and count as zero
    "remainder_floor": 1e-14,
}


@dataclass
class ExperimentConfig:
    model: dict
    n_grid: list = field(default_factory=lambda: [500, 2000, 8000])
    replicates: int | None = None
    seed: int = 0
    checks: list = field(default_factory=lambda: ["clt"])
    output: str | None = None
    tolerances: dict = field(default_factory=dict)
    deltas: list = field(default_factory=lambda: [0.05, 0.1, 0.2])
    mc_points: int = 200_000
    ladder: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    consistency_replicates: int = 20
    workers: int | None = None

    def __post_init__(self):
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise InvalidConfiguration(f"unknown checks {sorted(unknown)}; choose from {list(CHECKS)}")
        if any(int(n) < 10 for n in self.n_grid):
            raise InvalidConfiguration("sample sizes must be at least 10")
        if self.replicates is not None and int(self.replicates) < 1:
            raise InvalidConfiguration("replicates must be positive")
        if any(not 0 < d <= math.pi / 4 for d in self.deltas):
            raise InvalidConfiguration("probe radii must lie in (0, pi/4]")

    def build_model(self):
        return model_from_config(self.model)

    def resolved_replicates(self, m):
        if self.replicates is not None:
            return int(self.replicates)
        return 5000 if m == 1 else 2000

    def tol(self, key):
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])

    def echo(self):
        """Config as recorded in reports; the worker count cannot change results."""
        return {
            "model": self.model,
            "n_grid": [int(n) for n in self.n_grid],
            "replicates": self.replicates,
            "seed": int(self.seed),
            "checks": list(self.checks),
            "tolerances": {**DEFAULT_TOLERANCES, **self.tolerances},
            "deltas": [float(d) for d in self.deltas],
            "mc_points": int(self.mc_points),
            "ladder": [float(r) for r in self.ladder],
            "consistency_replicates": int(self.consistency_replicates),
        }

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        if "model" not in d:
            raise InvalidConfiguration("experiment config needs a 'model' entry")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidConfiguration(f"unknown config fields {sorted(extra)}")
        return cls(**d)


@dataclass
class ExperimentReport:
    config: dict
    prediction: dict | None = None
    clt: list = field(default_factory=list)
    volume: dict | None = None
    residual: dict | None = None
    consistency: dict | None = None
    metadata: dict = field(default_factory=dict)
    format_version: str = FORMAT_VERSION
    # per-n replicate statistics w, kept in memory for CSV export only
    replicates: dict = field(default_factory=dict, repr=False, compare=False)

    def to_json(self):
        return {
            "format_version": self.format_version,
            "config": self.config,
            "prediction": self.prediction,
            "clt": self.clt,
            "volume": self.volume,
            "residual": self.residual,
            "consistency": self.consistency,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise VersionError(f"unsupported report version {d.get('format_version')!r}; expected {FORMAT_VERSION}")
        keys = ("config", "prediction", "clt", "volume", "residual", "consistency", "metadata")
        return cls(**{k: d.get(k) for k in keys if k in d})

    def passed(self):
        """True when every recorded acceptance flag is true."""
        flags = [row["within_band"] for row in self.clt if row.get("within_band") is not None]
        if self.volume:
            flags += [r["within_band"] for r in self.volume["rows"] if r["within_band"] is not None]
            flags.append(self.volume["slope_ok"])
        if self.residual:
            flags.append(self.residual["passed"])
        if self.consistency:
            flags.append(self.consistency["monotone_decreasing"])
        return all(flags)


def runtime_metadata():
    # versions only: timings would break byte-identical reruns
    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "generator": GENERATOR_ID,
    }


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def persist_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps(report.to_json()))


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise VersionError(f"report is not valid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise VersionError("report root must be an object")
    return ExperimentReport.from_json(d)


def export_replicates_csv(report, path):
    """One row per replicate: n, replicate index, w components."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        m = None
        for n in sorted(report.replicates):
            W = report.replicates[n]["w"]
            idx = report.replicates[n]["index"]
            if m is None:
                m = W.shape[1]
                wr.writerow(["n", "replicate"] + [f"w{i}" for i in range(m)])
            for r, w in zip(idx, W):
                wr.writerow([n, r] + [repr(float(c)) for c in w])


# --------------------------------------------------------------------------
# CLT Monte Carlo


def _worker_count(config):
    if config.workers is not None:
        return max(1, int(config.workers))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise InvalidConfiguration(f"{WORKERS_ENV} must be an integer") from None


def _replicate_block(model_cfg, n, seed, indices, x0):
    model = model_from_config(model_cfg)
    kind = model.kind
    out, failed = [], []
    for r in indices:
        s = sample(model, n, seed, n, r)
        try:
            xm = sample_mean_coords(kind, s.points)
        except SolverFailure:
            failed.append(r)
            continue
        w = math.sqrt(n) * kind.to_frame(x0, kind.log(x0, xm[None, :])[0])
        out.append((r, w))
    return out, failed


def _run_replicates(config, model, n, R, x0):
    workers = _worker_count(config)
    idx = list(range(R))
    if workers == 1:
        return _replicate_block(config.model, n, config.seed, idx, x0)
    blocks = [idx[k::workers] for k in range(workers)]
    res, fails = [], []
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(_replicate_block, config.model, n, config.seed, b, x0) for b in blocks]
        for f in futs:
            o, fl = f.result()
            res += o
            fails += fl
    res.sort(key=lambda t: t[0])
    return res, sorted(fails)


def covariance_stats(W, Sigma=None, se_band=3.0):
    """Empirical covariance of the rows of W with delta-method standard errors."""
    W = np.asarray(W, dtype=float)
    R, m = W.shape
    mean = W.mean(axis=0)
    D = W - mean
    S = D.T @ D / (R - 1)
    S = 0.5 * (S + S.T)
    prod = D[:, :, None] * D[:, None, :]
    se = np.sqrt(np.var(prod, axis=0, ddof=1) / R)
    m2 = np.mean(D**2, axis=0)
    skew = np.mean(D**3, axis=0) / m2**1.5
    kurt = np.mean(D**4, axis=0) / m2**2 - 3.0
    out = {
        "replicates": int(R),
        "mean": mean.tolist(),
        "covariance": S.tolist(),
        "standard_errors": se.tolist(),
        "covariance_eigenvalues": np.linalg.eigvalsh(S).tolist(),
        "skewness_z": (skew / math.sqrt(6.0 / R)).tolist(),
        "kurtosis_z": (kurt / math.sqrt(24.0 / R)).tolist(),
    }
    if Sigma is not None:
        Sigma = np.asarray(Sigma)
        z = np.abs(S - Sigma) / np.where(se > 0, se, np.inf)
        nS = np.linalg.norm(Sigma)
        out.update({
            "relative_frobenius_error": float(np.linalg.norm(S - Sigma) / nS),
            "frobenius_error_se": float(np.sqrt(np.sum(se**2)) / nS),
            "z_scores": z.tolist(),
            "within_band": bool(np.all(z <= se_band)),
            "mean_norm": float(np.linalg.norm(mean)),
            "mean_bound": float(4.0 * math.sqrt(np.trace(Sigma) / R)),
        })
    return out


def run_clt_experiment(config, report=None):
    """sqrt(n) log_{x0}(mean_n) across replicates, compared with Sigma."""
    model = config.build_model()
    if model.declared_mean is None:
        raise InvalidConfiguration("CLT experiment needs a model with a declared mean")
    kind, x0 = model.kind, model.declared_mean
    pred = psi_mu(model, x0)
    report = report or ExperimentReport(config.echo(), metadata=runtime_metadata())
    report.prediction = pred.to_json()
    R = config.resolved_replicates(kind.dim)
    band = config.tol("se_band")
    for n in config.n_grid:
        n = int(n)
        res, failed = _run_replicates(config, model, n, R, x0)
        rate = len(failed) / R
        if rate > config.tol("failure_cap"):
            raise ExperimentInvalid(f"{len(failed)} of {R} solves failed at n={n}")
        W = np.array([w for _, w in res])
        report.replicates[n] = {"w": W, "index": [r for r, _ in res]}
        # covariance comparisons need at least 100 replicates
        compare = pred.Sigma is not None and len(W) >= 100
        row = {"n": n, "failures": len(failed), "failed_indices": failed}
        row.update(covariance_stats(W, pred.Sigma if compare else None, band))
        if not compare:
            row["within_band"] = None
        report.clt.append(row)
    errs = [r.get("relative_frobenius_error") for r in report.clt]
    if len(errs) > 1 and all(e is not None for e in errs):
        ses = [r["frobenius_error_se"] for r in report.clt]
        ordered = all(b <= a + band * math.hypot(sa, sb) for a, b, sa, sb in zip(errs, errs[1:], ses, ses[1:]))
        report.metadata["error_ordering_within_band"] = ordered
    return report


# --------------------------------------------------------------------------
# cut-set volume probe


def cut_set_volume(kind, delta):
    """Closed-form vol{z : C_z meets B_delta(x0)} where available."""
    if isinstance(kind, Torus):
        return (2.0 * math.pi) ** kind.d - (2.0 * math.pi - 2.0 * delta) ** kind.d
    if isinstance(kind, ProjectiveSpace) and kind.d == 2:
        return 2.0 * math.pi * math.sin(delta)
    if isinstance(kind, Sphere):
        if kind.d == 1:
            return 2.0 * delta
        area = 2.0 * math.pi ** (kind.d / 2) / math.gamma(kind.d / 2)
        return area * quad(lambda r: math.sin(r) ** (kind.d - 1), 0.0, delta)[0]
    return None


def cut_set_bound(kind, delta):
    """Linear bound 2 d (2 pi)^(d-1) delta on flat tori; 8 pi delta for d = 2."""
    if isinstance(kind, Torus):
        return 2.0 * kind.d * (2.0 * math.pi) ** (kind.d - 1) * delta
    return None


def vol_A_delta_probe(kind, x0, deltas, mc_points, seed, se_band=3.0, slope_range=(0.9, 1.1)):
    """Monte Carlo volume of the union of cut loci reaching B_delta(x0)."""
    x0 = kind.canonicalize(np.asarray(x0, dtype=float))
    Z = kind.uniform_sample(make_rng(seed, 0xA), int(mc_points))
    dist = kind.cut_set_distance(x0, Z)
    rows = []
    for d in deltas:
        p = float(np.mean(dist < d))
        est = kind.volume * p
        se = kind.volume * math.sqrt(p * (1.0 - p) / len(Z))
        exact = cut_set_volume(kind, d)
        bound = cut_set_bound(kind, d)
        ok = None
        if exact is not None:
            ok = abs(est - exact) <= se_band * se
            if bound is not None:
                ok = ok and est <= bound + se_band * se
        rows.append({"delta": float(d), "estimate": est, "standard_error": se, "closed_form": exact,
                     "bound": bound, "within_band": ok})
    est = np.array([r["estimate"] for r in rows])
    slope = float(np.polyfit(np.log(deltas), np.log(est), 1)[0]) if len(rows) > 1 and np.all(est > 0) else float("nan")
    return {
        "kind": kind.name,
        "x0": x0.tolist(),
        "mc_points": int(mc_points),
        "rows": rows,
        "slope": slope,
        "slope_ok": bool(slope_range[0] <= slope <= slope_range[1]),
    }


# --------------------------------------------------------------------------
# residual decay


def _decay_row(values, ladder, floor, factor):
    r = [0.0 if v <= floor else v / rho for v, rho in zip(values, ladder)]
    mono = all(b <= a for a, b in zip(r, r[1:]))
    return {
        "remainders": [float(v) for v in values],
        "ratios": r,
        "monotone": mono,
        "decay_ok": r[-1] <= r[0] / factor,
    }


def residual_decay_suite(model, ladder=(1e-1, 1e-2, 1e-3, 1e-4), directions=8, floor=1e-14, factor=20.0):
    """remainder / rho along geodesic rays for the linearisation and the
    transported expansion; rows whose ratios fail to decay are flagged."""
    kind, x0 = model.kind, model.declared_mean
    if x0 is None:
        raise InvalidConfiguration("residual decay needs a model with a declared mean")
    ladder = [float(r) for r in ladder]
    Psi = psi_mu(model, x0).Psi
    E = kind.frame(x0)
    lin = []
    for u in ray_directions(kind, x0, directions):
        vals = [linearization_residual(model, x0, kind.exp(x0, rho * (u @ E)), Psi) for rho in ladder]
        lin.append({"direction": u.tolist(), **_decay_row(vals, ladder, floor, factor)})
    exp_rows = []
    for d in crossing_directions(kind, directions):
        checks = [transport_expansion_check(kind, x0, *expansion_configuration(kind, x0, rho, d)) for rho in ladder]
        row = {"tilt": d[0], "tangent": d[1], **_decay_row([c.remainder for c in checks], ladder, floor, factor)}
        row["jump_norm"] = None if checks[0].jump is None else float(np.linalg.norm(checks[0].jump))
        row["chart_rho_kappa"] = checks[0].chart_rho_kappa
        exp_rows.append(row)
    rows = lin + exp_rows
    return {
        "ladder": ladder,
        "floor": floor,
        "decay_factor": factor,
        "linearization": lin,
        "expansion": exp_rows,
        "flagged": sum(not (r["monotone"] and r["decay_ok"]) for r in rows),
        "passed": all(r["decay_ok"] for r in rows),
    }


# --------------------------------------------------------------------------
# umbrella


def run_experiment(config):
    """Run the selected checks and return one report."""
    report = ExperimentReport(config.echo(), metadata=runtime_metadata())
    model = config.build_model()
    if "clt" in config.checks:
        run_clt_experiment(config, report)
    if "volume" in config.checks:
        x0 = model.declared_mean if model.declared_mean is not None else reference_point(model.kind)
        report.volume = vol_A_delta_probe(
            model.kind, x0, config.deltas, config.mc_points, config.seed, config.tol("se_band"),
            (config.tol("slope_low"), config.tol("slope_high")),
        )
    if "residual" in config.checks:
        report.residual = residual_decay_suite(
            model, config.ladder, floor=config.tol("remainder_floor"), factor=config.tol("decay_factor")
        )
    if "consistency" in config.checks:
        report.consistency = consistency_probe(
            model, config.n_grid, config.consistency_replicates, config.seed
        ).to_json()
    if config.output:
        persist_report(report, config.output)
    return report
