"""Closed-form geometry kernels for the circle, flat tori, spheres and
real projective space.

Manifold objects expose vectorised numpy methods working in *ambient*
coordinates: angle vectors for the circle and tori, unit vectors in
R^(d+1) for spheres and projective spaces. Tangent vectors are ambient
vectors orthogonal to the base point (angle increments on flat kinds).
``ManifoldPoint`` / ``TangentVector`` and the module-level functions wrap
these kernels with validation and the frame convention used for I/O.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import re

import numpy as np

from .errors import (
    CutLocusError,
    InvalidDirection,
    InvalidPoint,
    KindMismatch,
    UnsupportedManifold,
)
from .quadrature import gauss_legendre, sphere_direction_rule, tensor_gauss_legendre

EPS_CUT = 1e-9
NEIGHBORHOOD = np.pi / 8
_UNIT_TOL = 1e-12


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def _norm(V):
    return np.linalg.norm(V, axis=-1)


def gram_schmidt_frame(x):
    """Orthonormal basis of the orthogonal complement of the unit vector x.

    Standard basis vectors are tried in index order and kept whenever their
    residual is not negligible; two orthogonalisation passes keep the frame
    orthonormal to rounding error. Rows of the result are the frame vectors.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    basis = [x / np.linalg.norm(x)]
    frame = []
    for i in range(n):
        if len(frame) == n - 1:
            break
        v = np.zeros(n)
        v[i] = 1.0
        for _ in range(2):
            for q in basis:
                v = v - (v @ q) * q
        r = np.linalg.norm(v)
        if r > 1e-8:
            v = v / r
            basis.append(v)
            frame.append(v)
    return np.array(frame)


# --------------------------------------------------------------------------
# sphere primitives shared by Sphere and ProjectiveSpace


def _unit(X):
    """Normalise rows; unit rows (to 1e-15) pass through unchanged."""
    X = np.asarray(X, dtype=float)
    n = _norm(X)[..., None]
    return np.where(np.abs(n - 1.0) <= 1e-15, X, X / n)


def _sphere_exp(x, V):
    V = np.asarray(V, dtype=float)
    theta = _norm(V)[..., None]
    out = np.cos(theta) * x + np.sinc(theta / np.pi) * V
    return out / _norm(out)[..., None]


def _sphere_log(x, Y):
    Y = np.asarray(Y, dtype=float)
    c = Y @ x
    W = Y - c[..., None] * x
    # identical points would otherwise leave rounding residue of <x, x> - 1
    W = np.where(np.all(Y == x, axis=-1)[..., None], 0.0, W)
    s = _norm(W)
    theta = np.arctan2(s, c)
    factor = np.divide(theta, s, out=np.ones_like(s), where=s > 0)
    return factor[..., None] * W


def _sphere_dist(x, Y):
    Y = np.asarray(Y, dtype=float)
    c = Y @ x
    s = _norm(Y - c[..., None] * x)
    return np.arctan2(s, c)


def _sphere_transport(x, y, V):
    l = _sphere_log(x, y)
    theta = float(np.linalg.norm(l))
    V = np.asarray(V, dtype=float)
    if theta == 0.0:
        return V.copy()
    u = l / theta
    return V + (V @ u)[..., None] * ((math.cos(theta) - 1.0) * u - math.sin(theta) * x)


def _sphere_hessian(x, L):
    """Positive Hessian tensor (1/2)Hess rho_y^2 at x for log vectors L (N, a).

    Returned as ambient operators (N, a, a) acting on the tangent space at x.
    """
    L = np.atleast_2d(L)
    rho = _norm(L)
    P = np.eye(x.shape[0]) - np.outer(x, x)
    small = rho < 1e-3
    safe = np.where(small, 1.0, rho)
    b = np.where(small, 1.0 - rho**2 / 3.0 - rho**4 / 45.0, safe / np.tan(safe))
    a = np.where(small, 1.0 / 3.0 + rho**2 / 45.0, (1.0 - b) / safe**2)
    a = np.where(rho < 1e-6, 0.0, a)
    b = np.where(rho < 1e-6, 1.0, b)
    return a[:, None, None] * (L[:, :, None] * L[:, None, :]) + b[:, None, None] * P


# --------------------------------------------------------------------------
# manifolds


class Manifold:
    """Common interface; concrete kinds are frozen dataclasses below."""

    name: str
    dim: int
    ambient_dim: int
    flat = False

    def __str__(self):
        return self.name

    # frame conversions -------------------------------------------------
    def to_frame(self, x, V):
        return np.asarray(V, dtype=float) @ self.frame(x).T

    def from_frame(self, x, C):
        return np.asarray(C, dtype=float) @ self.frame(x)

    def on_cut(self, x, Y, eps=EPS_CUT):
        return self.cut_margin(x, Y) <= eps

    def hessian_frame(self, x, Y):
        """H(x|y) in the frame at x, shape (N, m, m)."""
        E = self.frame(x)
        return np.einsum("ia,nab,jb->nij", E, self.hessian(x, Y), E)


@dataclass(frozen=True)
class Torus(Manifold):
    """Flat square torus (-pi, pi]^d; ``Circle`` is the d = 1 case."""

    d: int = 2
    flat = True

    def __post_init__(self):
        if self.d < 1:
            raise UnsupportedManifold("torus dimension must be positive")

    @property
    def name(self):
        return f"torus{self.d}"

    @property
    def dim(self):
        return self.d

    @property
    def ambient_dim(self):
        return self.d

    @property
    def volume(self):
        return (2.0 * np.pi) ** self.d

    def canonicalize(self, X):
        return wrap_angle(X)

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,) or not np.all(np.isfinite(x)):
            raise InvalidPoint(f"{self.name} point needs {self.d} finite angles")
        if np.any(x <= -np.pi) or np.any(x > np.pi):
            raise InvalidPoint("angles must lie in (-pi, pi]")
        return x

    def project_tangent(self, x, V):
        return np.asarray(V, dtype=float)

    def frame(self, x):
        return np.eye(self.d)

    def log(self, x, Y):
        return wrap_angle(np.asarray(Y, dtype=float) - x)

    def dist(self, x, Y):
        return _norm(self.log(x, Y))

    def exp(self, x, V):
        return wrap_angle(x + np.asarray(V, dtype=float))

    def transport(self, x, y, V):
        return np.array(V, dtype=float)

    def cut_time(self, x, U):
        U = np.abs(np.asarray(U, dtype=float))
        with np.errstate(divide="ignore"):
            return np.min(np.where(U > 0, np.pi / np.where(U > 0, U, 1.0), np.inf), axis=-1)

    def cut_margin(self, x, Y):
        return self.margin_from_log(x, self.log(x, Y))

    def margin_from_log(self, x, L):
        """cut_time(x, L/|L|) - |L| for log vectors L at x."""
        D = np.abs(L)
        r = _norm(D)
        with np.errstate(divide="ignore", invalid="ignore"):
            per = np.where(D > 0, (np.pi - D) * r[..., None] / np.where(D > 0, D, 1.0), np.inf)
        return np.where(r > 0, np.min(per, axis=-1), np.pi)

    def log_candidates(self, x, y, eps=EPS_CUT):
        d = self.log(x, y)
        idx = [i for i in range(self.d) if abs(d[i]) >= np.pi - eps]
        out = []
        for mask in range(2 ** len(idx)):
            v = d.copy()
            for j, i in enumerate(idx):
                v[i] = np.pi if (mask >> j) & 1 == 0 else -np.pi
            out.append(v)
        return out

    def hessian(self, x, Y):
        n = np.atleast_2d(Y).shape[0]
        return np.broadcast_to(np.eye(self.d), (n, self.d, self.d)).copy()

    def polar_quadrature(self, x, n):
        """Nodes, log vectors at x and volume weights covering the torus."""
        T, w = tensor_gauss_legendre([(-np.pi, np.pi)] * self.d, n)
        return wrap_angle(x + T), T, w

    def uniform_sample(self, rng, n):
        return wrap_angle(rng.uniform(-np.pi, np.pi, size=(n, self.d)))

    def cut_set_distance(self, x0, Z):
        """Distance from x0 to the cut locus of each z in Z."""
        return np.min(np.abs(wrap_angle(x0 - np.asarray(Z) - np.pi)), axis=-1)

    def extrinsic_mean(self, Y, weights=None):
        Y = np.atleast_2d(Y)
        w = np.full(len(Y), 1.0 / len(Y)) if weights is None else weights
        s, c = w @ np.sin(Y), w @ np.cos(Y)
        return wrap_angle(np.where(np.hypot(s, c) > 1e-14, np.arctan2(s, c), 0.0))

    def cut_structure_charts(self, x):
        return [TorusCutChart(self, np.asarray(x, dtype=float), i) for i in range(self.d)]


@dataclass(frozen=True)
class Circle(Torus):
    d: int = 1

    def __post_init__(self):
        if self.d != 1:
            raise UnsupportedManifold("Circle is one-dimensional")

    @property
    def name(self):
        return "circle"


@dataclass(frozen=True)
class Sphere(Manifold):
    """Unit sphere S^d in R^(d+1)."""

    d: int = 2

    def __post_init__(self):
        if self.d < 1:
            raise UnsupportedManifold("sphere dimension must be positive")

    @property
    def name(self):
        return f"sphere{self.d}"

    @property
    def dim(self):
        return self.d

    @property
    def ambient_dim(self):
        return self.d + 1

    @property
    def volume(self):
        k = self.d + 1
        return 2.0 * np.pi ** (k / 2) / math.gamma(k / 2)

    def canonicalize(self, X):
        return _unit(X)

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d + 1,) or not np.all(np.isfinite(x)):
            raise InvalidPoint(f"{self.name} point needs {self.d + 1} finite coordinates")
        if abs(np.linalg.norm(x) - 1.0) > _UNIT_TOL:
            raise InvalidPoint("point must have unit norm")
        return x

    def project_tangent(self, x, V):
        V = np.asarray(V, dtype=float)
        return V - (V @ x)[..., None] * x

    def frame(self, x):
        return gram_schmidt_frame(x)

    def log(self, x, Y):
        return _sphere_log(x, Y)

    def dist(self, x, Y):
        return _sphere_dist(x, Y)

    def exp(self, x, V):
        return _sphere_exp(x, V)

    def transport(self, x, y, V):
        return _sphere_transport(x, y, V)

    def cut_time(self, x, U):
        return np.full(np.shape(U)[:-1], np.pi)

    def cut_margin(self, x, Y):
        return np.pi - self.dist(x, Y)

    def margin_from_log(self, x, L):
        return np.pi - _norm(L)

    def log_candidates(self, x, y, eps=EPS_CUT):
        if self.d == 1:
            t = self.frame(x)[0]
            return [np.pi * t, -np.pi * t]
        return []

    def hessian(self, x, Y):
        return _sphere_hessian(x, self.log(x, Y))

    def polar_quadrature(self, x, n):
        r, wr = gauss_legendre(0.0, np.pi, n)
        U, wu = sphere_direction_rule(self.d - 1, n)
        U = U @ self.frame(x)
        L = (r[:, None, None] * U[None, :, :]).reshape(-1, self.d + 1)
        w = ((wr * np.sin(r) ** (self.d - 1))[:, None] * wu[None, :]).ravel()
        return self.exp(x, L), L, w

    def uniform_sample(self, rng, n):
        return self.canonicalize(rng.standard_normal((n, self.d + 1)))

    def cut_set_distance(self, x0, Z):
        return np.pi - self.dist(x0, Z)

    def extrinsic_mean(self, Y, weights=None):
        Y = np.atleast_2d(Y)
        w = np.full(len(Y), 1.0 / len(Y)) if weights is None else weights
        m = w @ Y
        r = np.linalg.norm(m)
        return m / r if r > 1e-14 else Y[0].copy()

    def cut_structure_charts(self, x):
        if self.d == 1:
            return [AntipodeCutChart(self, np.asarray(x, dtype=float))]
        return []


@dataclass(frozen=True)
class ProjectiveSpace(Manifold):
    """RP^d as unit vectors modulo sign; the canonical representative has
    its first nonzero coordinate positive."""

    d: int = 2

    def __post_init__(self):
        if self.d < 1:
            raise UnsupportedManifold("projective dimension must be positive")

    @property
    def name(self):
        return f"rp{self.d}"

    @property
    def dim(self):
        return self.d

    @property
    def ambient_dim(self):
        return self.d + 1

    @property
    def volume(self):
        return 0.5 * Sphere(self.d).volume

    def canonicalize(self, X):
        X = _unit(X)
        nz = X != 0
        first = np.argmax(nz, axis=-1)
        lead = np.take_along_axis(X, first[..., None], axis=-1)
        return np.where(lead < 0, -X, X)

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d + 1,) or not np.all(np.isfinite(x)):
            raise InvalidPoint(f"{self.name} point needs {self.d + 1} finite coordinates")
        if abs(np.linalg.norm(x) - 1.0) > _UNIT_TOL:
            raise InvalidPoint("point must have unit norm")
        nz = np.flatnonzero(x)
        if len(nz) == 0 or x[nz[0]] < 0:
            raise InvalidPoint("projective representative must have first nonzero coordinate positive")
        return x

    def align(self, x, Y):
        """Representatives of Y on the closed hemisphere centred at x."""
        Y = np.asarray(Y, dtype=float)
        s = np.where(Y @ x < 0, -1.0, 1.0)
        return s[..., None] * Y

    def project_tangent(self, x, V):
        V = np.asarray(V, dtype=float)
        return V - (V @ x)[..., None] * x

    def frame(self, x):
        return gram_schmidt_frame(x)

    def log(self, x, Y):
        return _sphere_log(x, self.align(x, Y))

    def dist(self, x, Y):
        return _sphere_dist(x, self.align(x, Y))

    def exp(self, x, V):
        return self.canonicalize(_sphere_exp(x, V))

    def transport(self, x, y, V):
        yp = self.align(x, y)
        W = _sphere_transport(x, yp, V)
        sign = 1.0 if self.canonicalize(yp) @ yp > 0 else -1.0
        return sign * W

    def cut_time(self, x, U):
        return np.full(np.shape(U)[:-1], np.pi / 2)

    def cut_margin(self, x, Y):
        return np.pi / 2 - self.dist(x, Y)

    def margin_from_log(self, x, L):
        return np.pi / 2 - _norm(L)

    def log_candidates(self, x, y, eps=EPS_CUT):
        w = self.project_tangent(x, y)
        r = np.linalg.norm(w)
        if r == 0:
            return []
        u = w / r
        return [np.pi / 2 * u, -np.pi / 2 * u]

    def hessian(self, x, Y):
        return _sphere_hessian(x, self.log(x, Y))

    def polar_quadrature(self, x, n):
        r, wr = gauss_legendre(0.0, np.pi / 2, n)
        U, wu = sphere_direction_rule(self.d - 1, n)
        U = U @ self.frame(x)
        L = (r[:, None, None] * U[None, :, :]).reshape(-1, self.d + 1)
        w = ((wr * np.sin(r) ** (self.d - 1))[:, None] * wu[None, :]).ravel()
        return self.exp(x, L), L, w

    def uniform_sample(self, rng, n):
        return self.canonicalize(rng.standard_normal((n, self.d + 1)))

    def cut_set_distance(self, x0, Z):
        return np.arcsin(np.clip(np.abs(np.asarray(Z) @ x0), 0.0, 1.0))

    def extrinsic_mean(self, Y, weights=None):
        Y = np.atleast_2d(Y)
        w = np.full(len(Y), 1.0 / len(Y)) if weights is None else weights
        S = (Y * w[:, None]).T @ Y
        _, vecs = np.linalg.eigh(S)
        return self.canonicalize(vecs[:, -1])

    def cut_structure_charts(self, x):
        if self.d != 2:
            raise UnsupportedManifold("cut-structure quadrature is implemented for RP^2 only")
        return [ProjectiveCutChart(self, np.asarray(x, dtype=float))]


def ProjectivePlane():
    return ProjectiveSpace(2)


_NAME_RE = re.compile(r"^(circle|torus|sphere|rp)(\d*)$")


def kind_from_name(name):
    """Parse 'circle', 'torus2', 'sphere3', 'rp2', ... into a manifold."""
    m = _NAME_RE.match(str(name).strip().lower())
    if not m:
        raise UnsupportedManifold(f"unknown manifold kind {name!r}")
    family, digits = m.groups()
    if family == "circle":
        if digits not in ("", "1"):
            raise UnsupportedManifold("circle takes no dimension")
        return Circle()
    d = int(digits) if digits else 2
    if family == "torus":
        return Torus(d)
    if family == "sphere":
        return Sphere(d)
    return ProjectiveSpace(d)


# --------------------------------------------------------------------------
# cut-locus charts


class CutChart:
    """One connected piece of the regular cut locus H_x of the base point.

    Parameters live in ``domain`` (a box, possibly zero-dimensional). Each
    chart supplies the hypersurface measure density, kappa(y|x), the unit
    normal n(y|x) (frame components at y), tau' and the two branch distance
    functions phi_1, phi_2 valid on a neighbourhood of radius ``radius``.
    Branch 1 is the branch whose geodesic leaves the base point along the
    chart's reference direction; normals satisfy <n, grad phi_1> >= 0.
    """

    radius = NEIGHBORHOOD
    domain: list

    def __init__(self, kind, base):
        self.kind = kind
        self.base = base

    @property
    def param_dim(self):
        return len(self.domain)

    def tau_prime(self, params):
        return np.ones(len(np.atleast_2d(params)))

    def branch_distances(self, Y, ref=None):
        L1, L2 = self.branch_logs(Y, ref)
        return _norm(L1), _norm(L2)

    def base_distance(self, params):
        """rho_y(x) for chart points y."""
        return _norm(self.base_jump(params)) / self.base_kappa(params)

    def base_normal(self, params):
        """n(x|y): unit normal at the base point, frame components."""
        D = self.base_jump(params)
        return self.kind.to_frame(self.base, D / _norm(D)[:, None])

    def rho_kappa(self, params):
        """rho_y(x) * kappa(x|y), the jump size |log^(1) - log^(2)|."""
        return _norm(self.base_jump(params))

    def quadrature(self, n):
        return tensor_gauss_legendre(self.domain, n)


class TorusCutChart(CutChart):
    """Hypersurface {y : y_i - x_i = pi} of the flat torus cut locus."""

    def __init__(self, kind, base, axis):
        super().__init__(kind, base)
        self.axis = axis
        self.domain = [(-np.pi, np.pi)] * (kind.d - 1)

    def _embed(self, params):
        params = np.atleast_2d(np.asarray(params, dtype=float))
        k = params.shape[0]
        off = np.zeros((k, self.kind.d))
        others = [j for j in range(self.kind.d) if j != self.axis]
        off[:, others] = params.reshape(k, len(others))
        off[:, self.axis] = np.pi
        return off

    def points(self, params):
        return wrap_angle(self.base + self._embed(params))

    def measure(self, params):
        return np.ones(len(self._embed(params)))

    def base_jump(self, params):
        k = len(self._embed(params))
        D = np.zeros((k, self.kind.d))
        D[:, self.axis] = 2.0 * np.pi
        return D

    def base_kappa(self, params):
        return 2.0 * np.pi / _norm(self._embed(params))

    def kappa(self, params):
        return 2.0 * np.pi / _norm(self._embed(params))

    def normal(self, params):
        k = len(self._embed(params))
        N = np.zeros((k, self.kind.d))
        N[:, self.axis] = 1.0
        return N

    def locate(self, Y):
        D = wrap_angle(np.atleast_2d(Y) - self.base)
        return np.delete(D, self.axis, axis=1)

    def in_neighborhood(self, Y):
        Y = np.atleast_2d(Y)
        t = np.mod(Y[:, self.axis] - self.base[self.axis], 2.0 * np.pi)
        ok = np.abs(t - np.pi) < self.radius
        D = np.abs(wrap_angle(Y - self.base))
        D[:, self.axis] = 0.0
        return ok & np.all(D < np.pi - self.radius, axis=1)

    def branch_logs(self, Y, ref=None):
        Y = np.atleast_2d(Y)
        D = wrap_angle(Y - self.base)
        t = np.mod(Y[:, self.axis] - self.base[self.axis], 2.0 * np.pi)
        L1, L2 = D.copy(), D.copy()
        L1[:, self.axis] = t
        L2[:, self.axis] = t - 2.0 * np.pi
        return L1, L2


class AntipodeCutChart(CutChart):
    """Point chart {-x} of the one-dimensional sphere."""

    domain = []

    def points(self, params):
        k = len(np.atleast_2d(params))
        return np.tile(-self.base, (k, 1))

    def measure(self, params):
        return np.ones(len(np.atleast_2d(params)))

    def _t(self):
        return self.kind.frame(self.base)[0]

    def base_jump(self, params):
        k = len(np.atleast_2d(params))
        return np.tile(2.0 * np.pi * self._t(), (k, 1))

    def base_kappa(self, params):
        return np.full(len(np.atleast_2d(params)), 2.0)

    def kappa(self, params):
        return np.full(len(np.atleast_2d(params)), 2.0)

    def normal(self, params):
        k = len(np.atleast_2d(params))
        n = self.kind.to_frame(-self.base, -self._t())
        return np.tile(n, (k, 1))

    def locate(self, Y):
        return np.zeros((len(np.atleast_2d(Y)), 0))

    def _angle(self, Y):
        Y = np.atleast_2d(Y)
        return np.mod(np.arctan2(Y @ self._t(), Y @ self.base), 2.0 * np.pi)

    def in_neighborhood(self, Y):
        return np.abs(self._angle(Y) - np.pi) < self.radius

    def branch_logs(self, Y, ref=None):
        a = self._angle(Y)
        t = self._t()
        return a[:, None] * t, (a - 2.0 * np.pi)[:, None] * t


class ProjectiveCutChart(CutChart):
    """The cut circle of RP^2, parametrised by theta in [0, pi) with
    arc-length measure: y(theta) = [cos(theta) f1 + sin(theta) f2]."""

    domain = [(0.0, np.pi)]

    def __init__(self, kind, base):
        super().__init__(kind, base)
        self.F = kind.frame(base)

    def _dirs(self, params):
        th = np.atleast_2d(np.asarray(params, dtype=float)).reshape(-1)
        return np.cos(th)[:, None] * self.F[0] + np.sin(th)[:, None] * self.F[1]

    def points(self, params):
        return self.kind.canonicalize(self._dirs(params))

    def measure(self, params):
        return np.ones(len(self._dirs(params)))

    def base_jump(self, params):
        return np.pi * self._dirs(params)

    def base_kappa(self, params):
        return np.full(len(self._dirs(params)), 2.0)

    def kappa(self, params):
        return np.full(len(self._dirs(params)), 2.0)

    def normal(self, params):
        U = self._dirs(params)
        Yc = self.kind.canonicalize(U)
        sigma = np.sign(np.sum(Yc * U, axis=1))
        out = np.empty((len(U), 2))
        for k in range(len(U)):
            out[k] = self.kind.to_frame(Yc[k], -sigma[k] * self.base)
        return out

    def locate(self, Y):
        Y = np.atleast_2d(Y)
        th = np.mod(np.arctan2(Y @ self.F[1], Y @ self.F[0]), np.pi)
        return th[:, None]

    def in_neighborhood(self, Y):
        return np.abs(np.atleast_2d(Y) @ self.base) < np.sin(self.radius)

    def branch_logs(self, Y, ref=None):
        Y = np.atleast_2d(Y)
        if ref is None:
            U = self._dirs(self.locate(Y))
        else:
            U = np.tile(self._dirs(np.atleast_1d(ref)[:1]), (len(Y), 1))
        s = np.where(np.sum(Y * U, axis=1) < 0, -1.0, 1.0)[:, None]
        return _sphere_log(self.base, s * Y), _sphere_log(self.base, -s * Y)


# --------------------------------------------------------------------------
# value types


class ManifoldPoint:
    """A validated point in the canonical representation of its kind."""

    __slots__ = ("kind", "coords")

    def __init__(self, kind, coords):
        c = np.array(coords, dtype=float).reshape(-1)
        c = kind.check_point(c)
        c.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "coords", c)

    def __setattr__(self, key, value):
        raise AttributeError("ManifoldPoint is immutable")

    @classmethod
    def from_raw(cls, kind, coords):
        """Canonicalise arbitrary coordinates (wrap angles, normalise, fix sign)."""
        return cls(kind, kind.canonicalize(np.asarray(coords, dtype=float)))

    def __eq__(self, other):
        return (
            isinstance(other, ManifoldPoint)
            and self.kind == other.kind
            and np.array_equal(self.coords, other.coords)
        )

    def __hash__(self):
        return hash((self.kind.name, self.coords.tobytes()))

    def __repr__(self):
        return f"ManifoldPoint({self.kind.name}, {self.coords.tolist()})"

    def to_json(self):
        return {"kind": self.kind.name, "coords": [float(c) for c in self.coords]}

    @classmethod
    def from_json(cls, obj):
        return cls(kind_from_name(obj["kind"]), obj["coords"])


class TangentVector:
    """Tangent vector at ``base`` with components in the frame at ``base``."""

    __slots__ = ("base", "components")

    def __init__(self, base, components):
        c = np.array(components, dtype=float).reshape(-1)
        if c.shape != (base.kind.dim,):
            raise InvalidDirection(f"tangent vector needs {base.kind.dim} components")
        c.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "components", c)

    def __setattr__(self, key, value):
        raise AttributeError("TangentVector is immutable")

    @classmethod
    def from_ambient(cls, base, V):
        return cls(base, base.kind.to_frame(base.coords, base.kind.project_tangent(base.coords, V)))

    @property
    def ambient(self):
        return self.base.kind.from_frame(self.base.coords, self.components)

    @property
    def norm(self):
        return float(np.linalg.norm(self.components))

    def __neg__(self):
        return TangentVector(self.base, -self.components)

    def __mul__(self, s):
        return TangentVector(self.base, float(s) * self.components)

    __rmul__ = __mul__

    def __repr__(self):
        return f"TangentVector({self.base!r}, {self.components.tolist()})"

    def to_json(self):
        return {"base": self.base.to_json(), "components": [float(c) for c in self.components]}


@dataclass(frozen=True)
class CutStructure:
    kind: Manifold
    base: ManifoldPoint
    charts: list

    @property
    def empty(self):
        return len(self.charts) == 0


# --------------------------------------------------------------------------
# public operations


def _same_kind(kind, *points):
    for p in points:
        if p.kind != kind:
            raise KindMismatch(f"expected {kind.name}, got {p.kind.name}")


def distance(kind, x, y):
    _same_kind(kind, x, y)
    return float(kind.dist(x.coords, y.coords))


def exp_map(kind, x, v):
    _same_kind(kind, x, v.base)
    if x != v.base:
        raise InvalidDirection("tangent vector is not based at x")
    return ManifoldPoint.from_raw(kind, kind.exp(x.coords, v.ambient))


def _cut_check(kind, x, y, eps_cut, what):
    margin = float(kind.cut_margin(x.coords, y.coords))
    if margin <= eps_cut:
        raise CutLocusError(
            f"{what}: {y!r} lies within {eps_cut:g} of the cut locus of {x!r}",
            kind.log_candidates(x.coords, y.coords, eps_cut),
        )


def log_map(kind, x, y, eps_cut=EPS_CUT):
    _same_kind(kind, x, y)
    _cut_check(kind, x, y, eps_cut, "log_map")
    return TangentVector.from_ambient(x, kind.log(x.coords, y.coords))


def parallel_transport(kind, x, y, v, eps_cut=EPS_CUT):
    _same_kind(kind, x, y, v.base)
    if x != v.base:
        raise InvalidDirection("tangent vector is not based at x")
    _cut_check(kind, x, y, eps_cut, "parallel_transport")
    W = kind.transport(x.coords, y.coords, v.ambient)
    return TangentVector.from_ambient(y, W)


def cut_time(kind, x, u):
    _same_kind(kind, x, u.base)
    if abs(u.norm - 1.0) > _UNIT_TOL:
        raise InvalidDirection(f"direction must be a unit vector (norm {u.norm!r})")
    return float(kind.cut_time(x.coords, u.ambient))


def cut_structure(kind, x):
    _same_kind(kind, x)
    return CutStructure(kind, x, kind.cut_structure_charts(x.coords))
