"""Quadrature rules on the reference triangle and the reference edge.

Reference triangle: vertices (0, 0), (1, 0), (0, 1), area 1/2.
Reference edge: the unit interval [0, 1].

Triangle rules are collapsed (conical product) Gauss rules: Gauss-Jacobi in
the collapsed direction times Gauss-Legendre in the other.  All weights are
positive and the rules exist for any degree.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (n, 2) on the triangle, (n,) on the edge
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _npoints(degree: int) -> int:
    return max(1, math.ceil((degree + 1) / 2))


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre on [0, 1] exact for polynomials of the given degree."""
    x, w = leggauss(_npoints(degree))
    pts = 0.5 * (x + 1.0)
    return QuadratureRule(pts, 0.5 * w, degree)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Collapsed Gauss rule on the reference triangle, exact to ``degree``."""
    n = _npoints(degree)
    xu, wu = leggauss(n)
    u, wu = 0.5 * (xu + 1.0), 0.5 * wu
    # the (1 - v) Jacobian of the collapse is absorbed into the Jacobi weight
    xv, wv = roots_jacobi(n, 1.0, 0.0)
    v, wv = 0.5 * (xv + 1.0), 0.25 * wv
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    pts = np.stack([(U * (1.0 - V)).ravel(), V.ravel()], axis=1)
    return QuadratureRule(pts, W.ravel(), degree)


def subdivide_reference(levels: int, focus: int | None = None) -> list[np.ndarray]:
    """Split the reference triangle into sub-triangles (as (3, 2) vertex arrays).

    With ``focus=None`` every level splits all triangles into four.  With a
    vertex index ``focus`` each level only splits the sub-triangle touching
    that reference vertex, grading the partition towards it.
    """
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    done, todo = [], [ref]
    for _ in range(levels):
        nxt = []
        for t in todo:
            m01, m12, m20 = (t[0] + t[1]) / 2, (t[1] + t[2]) / 2, (t[2] + t[0]) / 2
            kids = [np.array([t[0], m01, m20]), np.array([m01, t[1], m12]),
                    np.array([m20, m12, t[2]]), np.array([m12, m20, m01])]
            if focus is None:
                nxt.extend(kids)
            else:
                nxt.append(kids[focus])
                done.extend(k for i, k in enumerate(kids) if i != focus)
        todo = nxt
    return done + todo


def composite_triangle_rule(degree: int, pieces: list[np.ndarray]) -> QuadratureRule:
    """Apply ``triangle_rule(degree)`` on each sub-triangle of the reference."""
    base = triangle_rule(degree)
    pts, wts = [], []
    for t in pieces:
        J = np.stack([t[1] - t[0], t[2] - t[0]], axis=1)
        pts.append(t[0] + base.points @ J.T)
        wts.append(base.weights * abs(np.linalg.det(J)))
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree)
