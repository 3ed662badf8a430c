"""Densities on the supported manifolds, seeded samplers and sample sets."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import InvalidConfiguration, KindMismatch, NumericalInconsistency
from .geometry import (
    Circle,
    ManifoldPoint,
    ProjectiveSpace,
    Sphere,
    Torus,
    gram_schmidt_frame,
    kind_from_name,
    wrap_angle,
)

GENERATOR_ID = "philox4x64-seedsequence/1"
NORMALIZATION_TOL = 1e-6


def make_rng(seed, *keys):
    """Counter-based generator keyed by (seed, *keys).

    Distinct key tuples give independent streams, so replicate r at sample
    size n can be regenerated in isolation from (seed, n, r).
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def default_nodes(kind):
    """Per-dimension node count of the population quadrature rule."""
    if isinstance(kind, Torus):
        return 512 if kind.d == 1 else (128 if kind.d == 2 else 40)
    return 128 if kind.dim <= 2 else (64 if kind.dim == 3 else 20)


def reference_point(kind):
    """Origin of the angle chart, or the last standard basis vector."""
    if isinstance(kind, Torus):
        return np.zeros(kind.d)
    return np.eye(kind.ambient_dim)[-1]


def population_nodes(model, x, nodes=None):
    """Quadrature nodes centred at x: (points, log vectors at x, weights * psi)."""
    kind = model.kind
    Y, L, w = kind.polar_quadrature(np.asarray(x, dtype=float), nodes or default_nodes(kind))
    return Y, L, w * model.pdf(Y)


class DensityModel:
    """Probability density psi with respect to the Riemannian volume."""

    variant = "abstract"
    kind = None
    declared_mean = None

    def pdf(self, X):
        raise NotImplementedError

    def sample_points(self, rng, n):
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    @property
    def normalization(self):
        raise NotImplementedError

    def total_mass(self, nodes=None):
        x = self.declared_mean if self.declared_mean is not None else reference_point(self.kind)
        _, _, wpsi = population_nodes(self, x, nodes)
        return float(np.sum(wpsi))

    def _check_normalization(self):
        mass = self.total_mass()
        if abs(mass - 1.0) > NORMALIZATION_TOL:
            raise NumericalInconsistency(f"{self.variant}: density integrates to {mass!r}, not 1")

    def declared_mean_point(self):
        if self.declared_mean is None:
            return None
        return ManifoldPoint(self.kind, self.declared_mean)

    def to_config(self, seed=None):
        cfg = {"manifold": self.kind.name, "density": {"variant": self.variant, "params": self.params()}}
        if seed is not None:
            cfg["seed"] = int(seed)
        return cfg

    def __repr__(self):
        return f"{type(self).__name__}({self.params()})"


class UniformMixtureVonMises(DensityModel):
    """(1 - eps) * vonMises(center, c) + eps * uniform on the circle."""

    variant = "UniformMixtureVonMises"

    def __init__(self, center=0.0, concentration=2.0, mixweight=0.0, check=True):
        if concentration < 0 or not 0.0 <= mixweight <= 1.0:
            raise InvalidConfiguration("need concentration >= 0 and mixweight in [0, 1]")
        self.kind = Circle()
        self.center = float(wrap_angle(center))
        self.concentration = float(concentration)
        self.mixweight = float(mixweight)
        self.declared_mean = None if self.mixweight == 1.0 else np.array([self.center])
        if check:
            self._check_normalization()

    @property
    def normalization(self):
        """Constant 1 / (2 pi I_0(c)) of the von Mises component."""
        return 1.0 / (2.0 * np.pi * special.i0(self.concentration))

    def angle_pdf(self, t):
        t = np.asarray(t, dtype=float)
        c = self.concentration
        vm = np.exp(c * (np.cos(t - self.center) - 1.0)) / (2.0 * np.pi * special.i0e(c))
        return (1.0 - self.mixweight) * vm + self.mixweight / (2.0 * np.pi)

    def pdf(self, X):
        X = np.asarray(X, dtype=float)
        return self.angle_pdf(X[..., 0])

    def sample_angles(self, rng, n):
        pick = rng.random(n) < self.mixweight
        vm = rng.vonmises(self.center, self.concentration, n)
        un = rng.uniform(-np.pi, np.pi, n)
        return wrap_angle(np.where(pick, un, vm))

    def sample_points(self, rng, n):
        return self.sample_angles(rng, n)[:, None]

    def params(self):
        return {"center": self.center, "concentration": self.concentration, "mixweight": self.mixweight}


class ProductCircleDensity(DensityModel):
    """Independent circle mixtures in each torus coordinate."""

    variant = "ProductCircleDensity"

    def __init__(self, factors, check=True):
        self.factors = [
            f if isinstance(f, UniformMixtureVonMises) else UniformMixtureVonMises(**f, check=False)
            for f in factors
        ]
        if not self.factors:
            raise InvalidConfiguration("need at least one factor")
        self.kind = Torus(len(self.factors))
        means = [f.declared_mean for f in self.factors]
        self.declared_mean = None if any(m is None for m in means) else np.concatenate(means)
        if check:
            self._check_normalization()

    @property
    def normalization(self):
        return float(np.prod([f.normalization for f in self.factors]))

    def pdf(self, X):
        X = np.asarray(X, dtype=float)
        out = np.ones(X.shape[:-1])
        for i, f in enumerate(self.factors):
            out = out * f.angle_pdf(X[..., i])
        return out

    def sample_points(self, rng, n):
        return np.stack([f.sample_angles(rng, n) for f in self.factors], axis=1)

    def params(self):
        return {"factors": [f.params() for f in self.factors]}


def _vmf_log_normalizer(p, kappa):
    """log C_p(kappa) - kappa, for the density C_p(kappa) exp(kappa <mu, x>)."""
    if kappa == 0:
        return -math.log(Sphere(p - 1).volume)
    nu = p / 2.0 - 1.0
    return nu * math.log(kappa) - (p / 2.0) * math.log(2.0 * np.pi) - math.log(special.ive(nu, kappa)) - kappa


def sample_vmf(rng, mu, kappa, n):
    """Von Mises-Fisher draws on S^(p-1) (Wood's rejection scheme; exact
    inversion of the polar component when p = 3)."""
    mu = np.asarray(mu, dtype=float)
    p = mu.shape[0]
    if kappa == 0:
        X = rng.standard_normal((n, p))
        return X / np.linalg.norm(X, axis=1)[:, None]
    if p == 3:
        u = rng.random(n)
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    else:
        b = (-2.0 * kappa + math.sqrt(4.0 * kappa**2 + (p - 1) ** 2)) / (p - 1)
        x0 = (1.0 - b) / (1.0 + b)
        c = kappa * x0 + (p - 1) * math.log(1.0 - x0**2)
        w = np.empty(0)
        while w.size < n:
            m = 2 * (n - w.size) + 16
            z = rng.beta((p - 1) / 2.0, (p - 1) / 2.0, m)
            u = rng.random(m)
            cand = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
            ok = kappa * cand + (p - 1) * np.log(1.0 - x0 * cand) - c >= np.log(u)
            w = np.concatenate([w, cand[ok]])
        w = w[:n]
    V = rng.standard_normal((n, p - 1))
    V /= np.linalg.norm(V, axis=1)[:, None]
    V = V @ gram_schmidt_frame(mu)
    w = np.clip(w, -1.0, 1.0)
    X = np.sqrt(1.0 - w**2)[:, None] * V + w[:, None] * mu
    return X / np.linalg.norm(X, axis=1)[:, None]


class VonMisesFisherMixture(DensityModel):
    """(1 - eps) * vMF(center, kappa) + eps * uniform on S^d."""

    variant = "VonMisesFisherMixture"

    def __init__(self, center, concentration=2.0, mixweight=0.0, check=True):
        center = np.asarray(center, dtype=float)
        if concentration < 0 or not 0.0 <= mixweight <= 1.0:
            raise InvalidConfiguration("need concentration >= 0 and mixweight in [0, 1]")
        self.kind = Sphere(center.shape[0] - 1)
        self.center = center / np.linalg.norm(center)
        self.concentration = float(concentration)
        self.mixweight = float(mixweight)
        self._log_c = _vmf_log_normalizer(center.shape[0], self.concentration)
        self.declared_mean = None if (self.mixweight == 1.0 or self.concentration == 0) else self.center.copy()
        if check:
            self._check_normalization()

    @property
    def normalization(self):
        return math.exp(self._log_c + self.concentration)

    def pdf(self, X):
        X = np.asarray(X, dtype=float)
        k = self.concentration
        vmf = np.exp(self._log_c + k * (X @ self.center))
        return (1.0 - self.mixweight) * vmf + self.mixweight / self.kind.volume

    def sample_points(self, rng, n):
        pick = rng.random(n) < self.mixweight
        V = sample_vmf(rng, self.center, self.concentration, n)
        U = self.kind.uniform_sample(rng, n)
        return np.where(pick[:, None], U, V)

    def params(self):
        return {
            "center": [float(c) for c in self.center],
            "concentration": self.concentration,
            "mixweight": self.mixweight,
        }


class ProjectedMixture(DensityModel):
    """Antipodally symmetrised sphere mixture, psi(x) = f(x) + f(-x) on RP^d."""

    variant = "ProjectedMixture"

    def __init__(self, center, concentration=2.0, mixweight=0.0, check=True):
        self.base = VonMisesFisherMixture(center, concentration, mixweight, check=False)
        self.kind = ProjectiveSpace(self.base.kind.d)
        bm = self.base.declared_mean
        self.declared_mean = None if bm is None else self.kind.canonicalize(bm)
        if check:
            self._check_normalization()

    @property
    def normalization(self):
        return 2.0 * self.base.normalization

    def pdf(self, X):
        X = np.asarray(X, dtype=float)
        return self.base.pdf(X) + self.base.pdf(-X)

    def sample_points(self, rng, n):
        return self.kind.canonicalize(self.base.sample_points(rng, n))

    def params(self):
        return self.base.params()


VARIANTS = {
    cls.variant: cls
    for cls in (UniformMixtureVonMises, ProductCircleDensity, VonMisesFisherMixture, ProjectedMixture)
}


def model_from_config(cfg):
    """Build a DensityModel from {"manifold": ..., "density": {"variant", "params"}}."""
    try:
        dens = cfg["density"]
        cls = VARIANTS[dens["variant"]]
        model = cls(**dens.get("params", {}))
    except KeyError as exc:
        raise InvalidConfiguration(f"bad model config: missing or unknown {exc}") from None
    except TypeError as exc:
        raise InvalidConfiguration(f"bad model parameters: {exc}") from None
    if "manifold" in cfg and kind_from_name(cfg["manifold"]) != model.kind:
        raise KindMismatch(f"variant {cls.variant} lives on {model.kind.name}, not {cfg['manifold']}")
    return model


SHIPPED_MODELS = {
    "circle": {
        "manifold": "circle",
        "density": {"variant": "UniformMixtureVonMises",
                    "params": {"center": 0.0, "concentration": 2.0, "mixweight": 0.3}},
    },
    "torus2": {
        "manifold": "torus2",
        "density": {"variant": "ProductCircleDensity",
                    "params": {"factors": [
                        {"center": 0.0, "concentration": 2.0, "mixweight": 0.3},
                        {"center": 0.0, "concentration": 3.0, "mixweight": 0.2},
                    ]}},
    },
    "sphere2": {
        "manifold": "sphere2",
        "density": {"variant": "VonMisesFisherMixture",
                    "params": {"center": [0.0, 0.0, 1.0], "concentration": 3.0, "mixweight": 0.2}},
    },
    "sphere3": {
        "manifold": "sphere3",
        "density": {"variant": "VonMisesFisherMixture",
                    "params": {"center": [0.0, 0.0, 0.0, 1.0], "concentration": 3.0, "mixweight": 0.2}},
    },
    "rp2": {
        "manifold": "rp2",
        "density": {"variant": "ProjectedMixture",
                    "params": {"center": [0.0, 0.0, 1.0], "concentration": 4.0, "mixweight": 0.2}},
    },
}


def shipped_model(name):
    return model_from_config(SHIPPED_MODELS[name])


# --------------------------------------------------------------------------
# samples


@dataclass
class SampleSet:
    kind: object
    points: np.ndarray
    seed: int
    generator: str = GENERATOR_ID
    keys: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.points)

    def manifold_points(self):
        return [ManifoldPoint(self.kind, p) for p in self.points]

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# kind: {self.kind.name}\n# seed: {self.seed}\n# generator: {self.generator}\n")
        buf.write(f"# keys: {','.join(str(k) for k in self.keys)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(self.kind.ambient_dim)])
        for p in self.points:
            w.writerow([repr(float(c)) for c in p])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, kind=None):
        meta = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            elif line.strip():
                rows.append(line)
        reader = csv.reader(rows)
        header = next(reader, None)
        pts = np.array([[float(c) for c in r] for r in reader], dtype=float)
        if kind is None:
            if "kind" not in meta:
                raise InvalidConfiguration("sample CSV lacks a '# kind:' line; pass the kind explicitly")
            kind = kind_from_name(meta["kind"])
        if header is None or len(header) != kind.ambient_dim:
            raise InvalidConfiguration(f"expected {kind.ambient_dim} columns for {kind.name}")
        pts = pts.reshape(-1, kind.ambient_dim)
        for p in pts:
            kind.check_point(p)
        keys = tuple(int(k) for k in meta.get("keys", "").split(",") if k)
        return cls(kind, pts, int(meta.get("seed", 0)), meta.get("generator", GENERATOR_ID), keys)


def sample(model, n, seed, *keys):
    """Draw n i.i.d. points; (seed, keys) fully determine the result."""
    if int(n) < 1:
        raise InvalidConfiguration("sample size must be at least 1")
    rng = make_rng(seed, *keys)
    pts = model.sample_points(rng, int(n))
    return SampleSet(model.kind, pts, int(seed), GENERATOR_ID, tuple(int(k) for k in keys))


def density_eval(model, x):
    if x.kind != model.kind:
        raise KindMismatch(f"model lives on {model.kind.name}, point on {x.kind.name}")
    return float(model.pdf(x.coords[None, :])[0])


def cut_density_trace(model, cut):
    """psi along each chart's parametrisation, one callable per chart."""
    if cut.kind != model.kind:
        raise KindMismatch("cut structure and model live on different manifolds")
    return [(lambda params, ch=ch: model.pdf(ch.points(params))) for ch in cut.charts]
