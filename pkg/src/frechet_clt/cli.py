"""Command-line entry point: ``frechet-clt {geom,mean,predict,simulate,check}``.

Exit codes: 0 success, 1 a check failed, 2 usage or input error, 3 domain
error. Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import criteria
from .asymptotics import psi_mu
from .errors import FrechetCLTError, InvalidPoint
from .experiments import ExperimentConfig, export_replicates_csv, run_experiment
from .frechet import FrechetObjective, SolverOptions, frechet_mean
from .geometry import (
    EPS_CUT,
    ManifoldPoint,
    TangentVector,
    cut_structure,
    cut_time,
    distance,
    exp_map,
    kind_from_name,
    log_map,
    parallel_transport,
)
from .measures import SHIPPED_MODELS, SampleSet, model_from_config, reference_point

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _vector(text, name):
    if text is None:
        return None
    try:
        val = json.loads(text) if text.strip().startswith("[") else [float(t) for t in text.split(",")]
        return np.asarray(val, dtype=float).reshape(-1)
    except ValueError:
        raise UsageError(f"--{name} must be a number, a comma-separated list or a JSON array") from None


def _point(kind, coords):
    """Wrap angles and fix the projective sign, but reject non-unit vectors."""
    c = np.asarray(coords, dtype=float)
    if not kind.flat and c.shape == (kind.ambient_dim,) and abs(np.linalg.norm(c) - 1.0) > 1e-9:
        raise InvalidPoint(f"{kind.name} point must have unit norm, got {np.linalg.norm(c):.6g}")
    return ManifoldPoint.from_raw(kind, c)


def _load_json(path_or_text, what):
    if os.path.isfile(path_or_text):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = path_or_text
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} is neither a readable file nor valid JSON: {exc}") from None


def _model_config(spec):
    if spec in SHIPPED_MODELS:
        return SHIPPED_MODELS[spec]
    return _load_json(spec, "--model")


def _emit(obj, out):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _check_out(path):
    if path and not os.path.isdir(os.path.dirname(os.path.abspath(path))):
        raise UsageError(f"output directory for {path} does not exist")


# --------------------------------------------------------------------------
# subcommands


def cmd_geom(args):
    kind = kind_from_name(args.kind)
    eps = EPS_CUT if args.tolerance is None else args.tolerance
    xc = _vector(args.x, "x")
    x = _point(kind, xc if xc is not None else reference_point(kind))
    op = args.op
    if op == "cut_time":
        uc = _vector(args.u, "u")
        u = TangentVector(x, uc if uc is not None else np.eye(kind.dim)[0])
        return {"op": op, "x": x.to_json(), "u": u.to_json(), "result": cut_time(kind, x, u)}
    if op == "cut_structure":
        cs = cut_structure(kind, x)
        return {"op": op, "x": x.to_json(), "charts": [type(c).__name__ for c in cs.charts],
                "param_dims": [c.param_dim for c in cs.charts]}
    if op == "exp":
        vc = _vector(args.v, "v")
        if vc is None:
            raise UsageError("exp needs --v")
        return {"op": op, "x": x.to_json(), "result": exp_map(kind, x, TangentVector(x, vc)).to_json()}
    yc = _vector(args.y, "y")
    if yc is None:
        raise UsageError(f"{op} needs --y")
    y = _point(kind, yc)
    if op == "distance":
        return {"op": op, "x": x.to_json(), "y": y.to_json(), "result": distance(kind, x, y)}
    if op == "log":
        return {"op": op, "x": x.to_json(), "y": y.to_json(), "result": log_map(kind, x, y, eps).to_json()}
    if op == "transport":
        vc = _vector(args.v, "v")
        if vc is None:
            raise UsageError("transport needs --v")
        res = parallel_transport(kind, x, y, TangentVector(x, vc), eps)
        return {"op": op, "x": x.to_json(), "y": y.to_json(), "result": res.to_json()}
    raise UsageError(f"unknown op {op}")


def cmd_mean(args):
    if not os.path.isfile(args.input):
        raise UsageError(f"sample file {args.input} not found")
    with open(args.input, encoding="utf-8") as fh:
        text = fh.read()
    kind = kind_from_name(args.kind) if args.kind else None
    s = SampleSet.from_csv(text, kind)
    opts = SolverOptions() if args.tolerance is None else SolverOptions(tol=args.tolerance)
    return frechet_mean(FrechetObjective.from_sample(s), opts).to_json()


def cmd_predict(args):
    model = model_from_config(_model_config(args.model))
    x0 = None
    if args.x is not None:
        x0 = _point(model.kind, _vector(args.x, "x"))
    return psi_mu(model, x0).to_json()


def cmd_simulate(args):
    if args.seed is None:
        raise UsageError("simulate requires --seed")
    cfg = ExperimentConfig(
        model=_model_config(args.model),
        n_grid=args.n or [500, 2000, 8000],
        replicates=args.replicates,
        seed=args.seed,
        checks=args.checks.split(","),
        workers=args.workers,
    )
    report = run_experiment(cfg)
    if args.csv:
        export_replicates_csv(report, args.csv)
    return report.to_json(), report.passed()


def cmd_check(args):
    with tempfile.TemporaryDirectory() as tmp:
        results = criteria.run_all(tmp, scale="full" if args.full else "quick")
    for r in results:
        print(r.line(), file=sys.stderr)
    summary = {
        "scale": "full" if args.full else "quick",
        "passed": sum(r.passed for r in results),
        "failed": sum(not r.passed for r in results),
        "criteria": [r.to_json() for r in results],
    }
    return summary, summary["failed"] == 0


def build_parser():
    p = _Parser(prog="frechet-clt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("geom", help="geometry queries")
    g.add_argument("--kind", required=True)
    g.add_argument("--op", required=True,
                   choices=["distance", "exp", "log", "transport", "cut_time", "cut_structure"])
    g.add_argument("--x")
    g.add_argument("--y")
    g.add_argument("--v", help="tangent vector in frame components at x")
    g.add_argument("--u", help="unit direction in frame components at x")
    g.add_argument("--tolerance", type=float, help="cut-locus band width")
    g.add_argument("--out")

    m = sub.add_parser("mean", help="sample Fréchet mean of a CSV sample")
    m.add_argument("--input", required=True)
    m.add_argument("--kind")
    m.add_argument("--tolerance", type=float, help="gradient-norm stopping tolerance")
    m.add_argument("--out")

    pr = sub.add_parser("predict", help="CLT ingredients for a model")
    pr.add_argument("--model", required=True, help="shipped model name, JSON file or JSON text")
    pr.add_argument("--x", help="base point (default: the declared mean)")
    pr.add_argument("--out")

    s = sub.add_parser("simulate", help="Monte Carlo experiment report")
    s.add_argument("--model", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--n", type=int, nargs="+")
    s.add_argument("--replicates", type=int)
    s.add_argument("--checks", default="clt")
    s.add_argument("--workers", type=int, help="worker processes (default: $FRECHET_CLT_WORKERS or 1)")
    s.add_argument("--csv", help="write per-replicate w vectors here")
    s.add_argument("--out")

    c = sub.add_parser("check", help="run the acceptance checks")
    c.add_argument("--full", action="store_true", help="stated Monte Carlo sizes (slow)")
    c.add_argument("--out")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _error("UsageError", str(exc))
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    handlers = {"geom": cmd_geom, "mean": cmd_mean, "predict": cmd_predict, "simulate": cmd_simulate,
                "check": cmd_check}
    try:
        _check_out(getattr(args, "out", None))
        if args.command == "simulate":
            _check_out(args.csv)
        res = handlers[args.command](args)
    except UsageError as exc:
        _error("UsageError", str(exc))
        return EXIT_USAGE
    except FrechetCLTError as exc:
        _error(type(exc).__name__, str(exc), _details(exc))
        return EXIT_DOMAIN
    status = EXIT_OK
    if isinstance(res, tuple):
        res, ok = res
        status = EXIT_OK if ok else EXIT_CHECK
    _emit(res, getattr(args, "out", None))
    return status


def _details(exc):
    out = {}
    for attr in ("candidates", "indices", "diagnostics", "eigenvalues"):
        val = getattr(exc, attr, None)
        if val:
            out[attr] = [np.asarray(v).tolist() for v in val] if attr == "candidates" else val
    return out


def _error(kind, message, payload=None):
    err = {"error": kind, "message": message}
    if payload:
        err["details"] = payload
    sys.stderr.write(json.dumps(err, sort_keys=True, default=str) + "\n")


if __name__ == "__main__":
    sys.exit(main())
