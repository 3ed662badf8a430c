"""CLT ingredients: Hessian tensors, the cut-locus tensor J, Psi, V0 and
the limiting covariance, plus numerical checks of the linearisation and of
the transported Taylor expansion across the cut locus."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CutLocusError,
    DegenerateHessian,
    InvalidConfiguration,
    InvalidStep,
    KindMismatch,
    NumericalInconsistency,
)
from .geometry import EPS_CUT, ManifoldPoint, Sphere
from .measures import SampleSet, make_rng, population_nodes

PD_TOL = 1e-10
SYM_TOL = 1e-6


def _coords(kind, x):
    if isinstance(x, ManifoldPoint):
        if x.kind != kind:
            raise KindMismatch(f"expected a {kind.name} point, got {x.kind.name}")
        return x.coords
    return kind.canonicalize(np.asarray(x, dtype=float))


def _check_off_cut(kind, x, y, eps=EPS_CUT):
    if kind.cut_margin(x, np.atleast_2d(y))[0] <= eps:
        raise CutLocusError("y lies in the cut-locus band of x", kind.log_candidates(x, y))


def hessian_tensor_point(kind, x, y):
    """H(x|y) = (1/2) Hess rho_y^2 at x as an m x m matrix in the frame at x."""
    x, y = _coords(kind, x), _coords(kind, y)
    _check_off_cut(kind, x, y)
    return kind.hessian_frame(x, y[None, :])[0]


def hessian_tensor_numeric(kind, x, y, h=1e-4):
    """Central-difference oracle for H(x|y) using parallel transport.

    Column j is -[Pi log_{x+}(y) - Pi log_{x-}(y)] / (2h) with x+- =
    exp_x(+-h e_j), both logs transported back to x.
    """
    if not h > 0:
        raise InvalidStep(f"finite-difference step must be positive, got {h!r}")
    x, y = _coords(kind, x), _coords(kind, y)
    _check_off_cut(kind, x, y)
    E = kind.frame(x)
    m = kind.dim
    out = np.empty((m, m))
    for j in range(m):
        cols = []
        for s in (1.0, -1.0):
            xs = kind.exp(x, s * h * E[j])
            if kind.cut_margin(xs, y[None, :])[0] <= EPS_CUT:
                raise CutLocusError("finite-difference step crosses the cut band", [])
            cols.append(kind.to_frame(x, kind.transport(xs, x, kind.log(xs, y))))
        out[:, j] = -(cols[0] - cols[1]) / (2.0 * h)
    return out


def j_mu_quadrature(model, x0, nodes=256, flip_normals=False):
    """J = int_H rho_y(x0) kappa(x0|y) n n^T tau' psi(y) dvol_H(y), PSD.

    Gauss-Legendre with ``nodes`` per chart dimension; point charts are
    evaluated directly. An empty cut structure gives the zero matrix.
    """
    kind = model.kind
    x0 = _coords(kind, x0)
    m = kind.dim
    J = np.zeros((m, m))
    for chart in kind.cut_structure_charts(x0):
        P, w = chart.quadrature(nodes)
        N = chart.base_normal(P)
        if flip_normals:
            N = -N
        wt = w * chart.measure(P) * chart.tau_prime(P) * chart.rho_kappa(P) * model.pdf(chart.points(P))
        J += (N * wt[:, None]).T @ N
    return J


def hbar(model, x0, nodes=None):
    """Integrated Hessian tensor H-bar(x0) = int H(x0|y) psi(y) dvol(y)."""
    kind = model.kind
    x0 = _coords(kind, x0)
    Y, _, wpsi = population_nodes(model, x0, nodes)
    if kind.flat:
        return np.eye(kind.dim) * wpsi.sum()
    Hs = kind.hessian_frame(x0, Y)
    return np.einsum("n,nij->ij", wpsi, Hs)


def v0(source, x0, nodes=None):
    """Cov(log_{x0} xi) in the frame at x0 for a model or a SampleSet."""
    if isinstance(source, SampleSet):
        kind = source.kind
        x0 = _coords(kind, x0)
        L = kind.to_frame(x0, kind.log(x0, source.points))
        w = np.full(len(L), 1.0 / len(L))
    else:
        kind = source.kind
        x0 = _coords(kind, x0)
        _, La, w = population_nodes(source, x0, nodes)
        L = kind.to_frame(x0, La)
    mean = w @ L
    C = (L * w[:, None]).T @ L - np.outer(mean, mean)
    return 0.5 * (C + C.T)


@dataclass
class CltPrediction:
    base: ManifoldPoint
    Hbar: np.ndarray
    J: np.ndarray
    Psi: np.ndarray
    V0: np.ndarray
    Sigma: np.ndarray | None
    eigenvalues: np.ndarray
    psi_positive_definite: bool

    def to_json(self):
        def mat(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "base": self.base.to_json(),
            "Hbar": mat(self.Hbar),
            "J": mat(self.J),
            "Psi": mat(self.Psi),
            "V0": mat(self.V0),
            "Sigma": mat(self.Sigma),
            "eigenvalues": mat(self.eigenvalues),
            "psi_positive_definite": self.psi_positive_definite,
        }


def clt_covariance(prediction):
    """Sigma = Psi^-1 V0 Psi^-T; indefinite or singular Psi is rejected."""
    Psi = np.asarray(prediction.Psi if hasattr(prediction, "Psi") else prediction, dtype=float)
    eig = np.linalg.eigvalsh(0.5 * (Psi + Psi.T))
    if eig.min() <= PD_TOL:
        raise DegenerateHessian(f"Psi is not positive definite (min eigenvalue {eig.min():.3g})", eig.tolist())
    A = np.linalg.inv(Psi)
    S = A @ prediction.V0 @ A.T
    return 0.5 * (S + S.T)


def psi_mu(model, x0=None, nodes=None, j_nodes=256):
    """Psi(x0) = H-bar(x0) - J(x0), with V0 and Sigma when Psi is PD."""
    kind = model.kind
    if x0 is None:
        if model.declared_mean is None:
            raise InvalidConfiguration("no base point given and the model declares no mean")
        x0 = model.declared_mean
    x0 = _coords(kind, x0)
    H = hbar(model, x0, nodes)
    J = j_mu_quadrature(model, x0, j_nodes)
    Psi = H - J
    if np.max(np.abs(Psi - Psi.T)) > SYM_TOL:
        raise NumericalInconsistency("Psi is not symmetric")
    Psi = 0.5 * (Psi + Psi.T)
    eig = np.linalg.eigvalsh(Psi)
    pred = CltPrediction(ManifoldPoint(kind, x0), H, J, Psi, v0(model, x0, nodes), None, eig, bool(eig.min() > PD_TOL))
    if pred.psi_positive_definite:
        pred.Sigma = clt_covariance(pred)
    return pred


def _population_value(model, x, nodes):
    _, L, wpsi = population_nodes(model, x, nodes)
    return float(wpsi @ np.einsum("ij,ij->i", L, L))


def frechet_hessian_fd(model, x0, h=1e-3, nodes=None, richardson=True):
    """Finite-difference Hessian of F at x0 in normal coordinates.

    F(exp_{x0}(sum t_i e_i)) is differenced with step h and, by default,
    Richardson-extrapolated from steps h and h/2.
    """
    kind = model.kind
    x0 = _coords(kind, x0)
    E = kind.frame(x0)
    m = kind.dim

    def f(t):
        return _population_value(model, kind.exp(x0, np.asarray(t) @ E), nodes)

    def hess(step):
        H = np.empty((m, m))
        f0 = f(np.zeros(m))
        I = np.eye(m)
        for i in range(m):
            H[i, i] = (f(step * I[i]) - 2.0 * f0 + f(-step * I[i])) / step**2
            for j in range(i):
                a = f(step * (I[i] + I[j])) - f(step * (I[i] - I[j]))
                b = f(step * (-I[i] + I[j])) - f(-step * (I[i] + I[j]))
                H[i, j] = H[j, i] = (a - b) / (4.0 * step**2)
        return H

    if not richardson:
        return hess(h)
    return (4.0 * hess(h / 2.0) - hess(h)) / 3.0


def population_gradient(model, x, nodes=None):
    """G(x) = int log_x(y) psi(y) dvol(y), ambient components."""
    _, L, wpsi = population_nodes(model, x, nodes)
    return wpsi @ L


def linearization_residual(model, x0, x, psi=None, nodes=None):
    """|Pi_{x,x0} G(x) + Psi log_{x0}(x)| in the frame at x0."""
    kind = model.kind
    x0, x = _coords(kind, x0), _coords(kind, x)
    if psi is None:
        psi = psi_mu(model, x0, nodes).Psi
    G = population_gradient(model, x, nodes)
    if not np.all(np.isfinite(G)):
        raise NumericalInconsistency("population gradient quadrature is not finite")
    TG = kind.to_frame(x0, kind.transport(x, x0, G))
    l = kind.to_frame(x0, kind.log(x0, x[None, :])[0])
    return float(np.linalg.norm(TG + psi @ l))


# --------------------------------------------------------------------------
# transported expansion across the cut locus


@dataclass
class ExpansionCheck:
    remainder: float
    rho: float
    crossing_time: float | None
    jump: np.ndarray | None
    chart_rho_kappa: float | None

    def to_json(self):
        return {
            "remainder": self.remainder,
            "rho": self.rho,
            "crossing_time": self.crossing_time,
            "jump": None if self.jump is None else self.jump.tolist(),
            "chart_rho_kappa": self.chart_rho_kappa,
        }


def _crossings(kind, z, x0, v, samples=64):
    """Bracketed sign changes of phi_1 - phi_2 along t -> exp_{x0}(t v)."""
    charts = kind.cut_structure_charts(z)
    ts = np.linspace(0.0, 1.0, samples + 1)
    G = kind.exp(x0, ts[:, None] * v)
    found = []
    for chart in charts:
        inside = chart.in_neighborhood(G)
        if not inside.any():
            continue
        # pin the branch labelling to the first point inside the neighbourhood
        ref = chart.locate(G[inside][:1])[0] if chart.param_dim else None

        def g(t, chart=chart, ref=ref):
            p1, p2 = chart.branch_distances(kind.exp(x0, t * v)[None, :], ref)
            return float(p1[0] - p2[0])

        vals = [g(t) if ok else np.nan for t, ok in zip(ts, inside)]
        for k in range(samples):
            a, b = vals[k], vals[k + 1]
            if np.isfinite(a) and np.isfinite(b) and (a < 0) != (b < 0):
                found.append((chart, g, ts[k], ts[k + 1]))
    return found


def _bisect(g, a, b, tol=1e-12):
    ga = g(a)
    while b - a > tol:
        c = 0.5 * (a + b)
        gc = g(c)
        if (gc < 0) == (ga < 0):
            a, ga = c, gc
        else:
            b = c
    return 0.5 * (a + b)


def transport_expansion_check(kind, z, x0, x1, with_jump=True):
    """Remainder of the transported Taylor expansion of log(., z) from x0 to x1.

    R = Pi_{x1,x0} log_{x1} z - log_{x0} z + H(x0|z) log_{x0} x1 - jump,
    where the jump is the transported difference of the two branch logs at
    the point where the geodesic crosses the regular cut locus of z. Without
    a cut-locus hypersurface (spheres of dimension >= 2) no crossing is
    required and the plain Taylor expansion is checked.
    """
    z, x0, x1 = _coords(kind, z), _coords(kind, x0), _coords(kind, x1)
    for p in (x0, x1):
        _check_off_cut(kind, p, z)
    v = kind.log(x0, x1[None, :])[0]
    rho = float(np.linalg.norm(v))
    lhs = kind.to_frame(x0, kind.transport(x1, x0, kind.log(x1, z[None, :])[0]))
    base = kind.to_frame(x0, kind.log(x0, z[None, :])[0])
    H = kind.hessian_frame(x0, z[None, :])[0]
    taylor = base - H @ kind.to_frame(x0, v)
    has_h = not (isinstance(kind, Sphere) and kind.d >= 2)
    t_z = jump = rk = None
    if has_h:
        cross = _crossings(kind, z, x0, v)
        if len(cross) != 1:
            raise InvalidConfiguration(f"geodesic must cross the cut hypersurface once, found {len(cross)}")
        chart, g, a, b = cross[0]
        t_z = _bisect(g, a, b)
        ys = kind.exp(x0, t_z * v)
        cands = kind.log_candidates(ys, z, eps=1e-6)
        if len(cands) != 2:
            raise InvalidConfiguration("crossing point is not on a regular cut hypersurface")
        # identify the branches seen just before and just after the crossing
        eps = min(1e-6, 1e-3 * rho)
        sides = []
        for t in (t_z - eps / rho, t_z + eps / rho):
            yt = kind.exp(x0, t * v)
            lt = kind.transport(yt, ys, kind.log(yt, z[None, :])[0])
            sides.append(int(np.argmin([np.linalg.norm(lt - c) for c in cands])))
        if sides[0] == sides[1]:
            raise InvalidConfiguration("no branch change detected at the crossing")
        d = cands[sides[1]] - cands[sides[0]]
        jump = kind.to_frame(x0, kind.transport(ys, x0, d))
        P = chart.locate(kind.canonicalize(kind.exp(x0, t_z * v))[None, :])
        rk = float(chart.rho_kappa(P)[0])
        if with_jump:
            taylor = taylor + jump
    return ExpansionCheck(float(np.linalg.norm(lhs - taylor)), rho, t_z, jump, rk)


def ray_directions(kind, x, count=8):
    """Deterministic unit directions in the frame at x."""
    m = kind.dim
    if m == 1:
        U = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)[:, None]
    elif m == 2:
        a = 2.0 * np.pi * (np.arange(count) + 0.25) / count
        U = np.column_stack([np.cos(a), np.sin(a)])
    else:
        U = make_rng(0, m, count).standard_normal((count, m))
    return U / np.linalg.norm(U, axis=1)[:, None]


def crossing_directions(kind, count=8):
    """Deterministic transversal tilts (angle to the chart normal, tangent index)."""
    if kind.dim == 1:
        return [(0.0, 0)] * count
    tilts = np.linspace(-np.pi / 3, np.pi / 3, count)
    return [(float(a), k % (kind.dim - 1)) for k, a in enumerate(tilts)]


def expansion_configuration(kind, z, rho, direction=(0.0, 0), frac=0.4, param=None):
    """End points x0, x1 of a geodesic segment of length rho.

    When z has a regular cut hypersurface the segment crosses it once at
    fraction ``frac``, at chart parameter ``param``, tilted from the normal by
    ``direction = (angle, tangent index)``. Otherwise the segment starts at
    distance 1 from z along the first frame vector and runs along a tilted
    frame direction.
    """
    z = _coords(kind, z)
    angle, t_idx = direction
    charts = [] if (isinstance(kind, Sphere) and kind.d >= 2) else kind.cut_structure_charts(z)
    if not charts:
        Ez = kind.frame(z)
        x0 = kind.exp(z, Ez[0])
        E = kind.frame(x0)
        u = np.cos(angle) * E[0] + np.sin(angle) * E[(1 + t_idx) % kind.dim]
        return x0, kind.exp(x0, rho * u)
    chart = charts[0]
    if param is None:
        param = [0.3] * chart.param_dim
    P = np.atleast_2d(np.asarray(param, dtype=float)).reshape(1, chart.param_dim)
    ys = chart.points(P)[0]
    n = chart.normal(P)[0]
    # orthonormal tangent complement of n in the frame at ys
    Q, _ = np.linalg.qr(np.column_stack([n, np.eye(kind.dim)]))
    T = Q[:, 1:kind.dim].T
    u = np.cos(angle) * n
    if len(T):
        u = u + np.sin(angle) * T[t_idx % len(T)]
    u = kind.from_frame(ys, u)
    return kind.exp(ys, -frac * rho * u), kind.exp(ys, (1.0 - frac) * rho * u)
