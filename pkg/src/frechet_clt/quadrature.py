"""Tensor-product quadrature rules used for population integrals."""

from functools import lru_cache
import itertools

import numpy as np


@lru_cache(maxsize=64)
def _gl_reference(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, n):
    """Gauss-Legendre nodes and weights on the interval (a, b)."""
    x, w = _gl_reference(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def tensor_gauss_legendre(box, n):
    """Tensor-product Gauss-Legendre rule on a box [(lo, hi), ...].

    Returns nodes of shape (n**k, k) and weights of shape (n**k,). An empty
    box gives the single-node rule for a zero-dimensional domain.
    """
    if len(box) == 0:
        return np.zeros((1, 0)), np.ones(1)
    rules = [gauss_legendre(lo, hi, n) for lo, hi in box]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


def sphere_direction_rule(k, n):
    """Quadrature on the unit sphere S^k embedded in R^(k+1).

    S^0 is the pair {+1, -1}; S^1 uses the periodic trapezoid rule with 2n
    nodes; higher spheres recurse through u = (cos a, sin a * u') with a
    Gauss-Legendre polar angle weighted by sin(a)**(k-1).
    """
    if k == 0:
        return np.array([[1.0], [-1.0]]), np.ones(2)
    if k == 1:
        m = 2 * n
        t = 2.0 * np.pi * np.arange(m) / m
        return np.stack([np.cos(t), np.sin(t)], axis=1), np.full(m, 2.0 * np.pi / m)
    a, wa = gauss_legendre(0.0, np.pi, n)
    sub, wsub = sphere_direction_rule(k - 1, n)
    ca, sa = np.cos(a), np.sin(a)
    dirs = np.concatenate(
        [ca[:, None, None] * np.ones((1, len(sub), 1)),
         sa[:, None, None] * sub[None, :, :]],
        axis=2,
    ).reshape(-1, k + 1)
    weights = (wa * sa ** (k - 1))[:, None] * wsub[None, :]
    return dirs, weights.ravel()


def lattice(m, values):
    """All points of values**m in lexicographic order, shape (len(values)**m, m)."""
    return np.array(list(itertools.product(values, repeat=m)), dtype=float)
