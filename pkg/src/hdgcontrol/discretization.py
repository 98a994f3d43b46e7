"""Orthonormal polynomial bases, mesh quadrature and L2 projections."""
from __future__ import annotations

from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import legval

from .mesh import TriMesh
from .quadrature import QuadratureRule, edge_rule, triangle_rule

SUPPORTED_DEGREES = (0, 1, 2, 3)


def monomial_exponents(k: int) -> list[tuple[int, int]]:
    """Exponents (a, b) of x^a y^b with a + b <= k, graded by total degree."""
    return [(d - b, b) for d in range(k + 1) for b in range(d + 1)]


def dim_p(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def _monomials(xi, k):
    """Monomials and their gradients w.r.t. the local coordinates."""
    exps = monomial_exponents(k)
    x, y = xi[..., 0], xi[..., 1]
    xp = [np.ones_like(x)] + [x ** a for a in range(1, k + 1)]
    yp = [np.ones_like(y)] + [y ** b for b in range(1, k + 1)]
    vals = np.stack([xp[a] * yp[b] for a, b in exps], axis=-1)
    dx = np.stack([a * xp[a - 1] * yp[b] if a else np.zeros_like(x) for a, b in exps], axis=-1)
    dy = np.stack([b * xp[a] * yp[b - 1] if b else np.zeros_like(x) for a, b in exps], axis=-1)
    return vals, np.stack([dx, dy], axis=-1)


class ElementBasis:
    """L2(K)-orthonormal basis of P^k on every element of a mesh.

    Built by Gram-Schmidt (a Cholesky factorisation of the Gram matrix) on
    monomials in the element's affine reference coordinates, centred at the
    centroid.  In those coordinates the Gram matrix is the same for every
    triangle up to the area factor, so the construction stays well
    conditioned on thin elements.
    """

    def __init__(self, mesh: TriMesh, k: int):
        if k not in SUPPORTED_DEGREES:
            raise ValueError(f"unsupported degree {k}")
        self.mesh = mesh
        self.k = k
        self.dim = dim_p(k)
        self.centers = mesh.centroids
        p = mesh.vertices[mesh.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        self.jinv = np.linalg.inv(J)
        rule = triangle_rule(2 * k)
        X, W = map_to_elements(mesh, rule)
        m, _ = _monomials(self._local(X, slice(None)), k)
        gram = np.einsum("eq,eqi,eqj->eij", W, m, m)
        eye = np.broadcast_to(np.eye(self.dim), gram.shape)
        # phi = C m with C = L^{-1}
        self.coeffs = np.linalg.solve(np.linalg.cholesky(gram), eye)

    def _local(self, points, elems):
        return np.einsum("eij,eqj->eqi", self.jinv[elems], points - self.centers[elems][..., None, :])

    def eval(self, points, elems=None):
        """Values (..., nq, nb) and gradients (..., nq, nb, 2) at physical points.

        ``points`` has shape (n, nq, 2) with one row per entry of ``elems``
        (all elements when ``elems`` is None).
        """
        elems = slice(None) if elems is None else np.asarray(elems)
        m, dm = _monomials(self._local(points, elems), self.k)
        C = self.coeffs[elems]
        vals = np.einsum("eij,eqj->eqi", C, m)
        # chain rule: d/dx_d = sum_j d/dxi_j * Jinv[j, d]
        dmx = np.einsum("eqij,ejd->eqid", dm, self.jinv[elems])
        grads = np.einsum("eij,eqjd->eqid", C, dmx)
        return vals, grads

    def values(self, points, elems=None):
        return self.eval(points, elems)[0]


def face_basis_values(k: int, s, length):
    """L2(F)-orthonormal Legendre basis at face parameters ``s`` in [0, 1].

    Returns shape (..., len(s), k+1) broadcasting ``length`` over faces.
    """
    s = np.asarray(s, dtype=float)
    t = 2.0 * s - 1.0
    vals = np.stack([legval(t, np.eye(k + 1)[j]) * np.sqrt(2 * j + 1) for j in range(k + 1)], axis=-1)
    length = np.asarray(length, dtype=float)
    return vals / np.sqrt(length)[..., None, None] if length.ndim else vals / np.sqrt(length)


def map_to_elements(mesh: TriMesh, rule: QuadratureRule, elems=None):
    """Physical quadrature points (n, nq, 2) and weights (n, nq)."""
    tri = mesh.triangles if elems is None else mesh.triangles[np.asarray(elems)]
    p = mesh.vertices[tri]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)  # (n, 2, 2)
    X = p[:, 0][:, None, :] + np.einsum("eij,qj->eqi", J, rule.points)
    detJ = np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])
    return X, detJ[:, None] * rule.weights[None, :]


def map_to_faces(mesh: TriMesh, rule: QuadratureRule, faces=None):
    """Physical points (n, nq, 2) and weights (n, nq) on faces.

    The face parameter runs from ``edges[f, 0]`` to ``edges[f, 1]``.
    """
    e = mesh.edges if faces is None else mesh.edges[np.asarray(faces)]
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    X = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    length = np.linalg.norm(b - a, axis=1)
    return X, length[:, None] * rule.weights[None, :]


class Space:
    """Quadrature and basis data for degree ``k`` on a mesh.

    Element arrays are indexed (elem, qp, ...); element-boundary arrays are
    indexed (elem, local edge, qp, ...) and use the quadrature points of the
    corresponding global face, so both sides of an interior face see the
    same points.
    """

    def __init__(self, mesh: TriMesh, k: int, qdegree: int | None = None):
        self.mesh = mesh
        self.k = k
        self.nb = dim_p(k)
        self.nf = k + 1
        self.qdegree = 2 * k + 2 if qdegree is None else qdegree
        self.basis = ElementBasis(mesh, k)
        self.trule = triangle_rule(self.qdegree)
        self.erule = edge_rule(self.qdegree)

        self.X, self.W = map_to_elements(mesh, self.trule)
        self.phi, self.dphi = self.basis.eval(self.X)

        self.XF, self.WF = map_to_faces(mesh, self.erule)
        self.psi = face_basis_values(k, self.erule.points, mesh.face_lengths)  # (nfaces, nq, nf)

    @cached_property
    def _boundary_side(self):
        F = self.mesh.elem_faces
        nt = self.mesh.n_elements
        XF = self.XF[F]  # (nt, 3, nqf, 2)
        phi_b, dphi_b = self.basis.eval(XF.reshape(nt, -1, 2))
        nq = self.erule.weights.size
        return (phi_b.reshape(nt, 3, nq, self.nb),
                dphi_b.reshape(nt, 3, nq, self.nb, 2))

    @property
    def phi_b(self):
        """Element basis on each element edge, (nt, 3, nqf, nb)."""
        return self._boundary_side[0]

    @property
    def psi_b(self):
        """Face basis of each element edge, (nt, 3, nqf, nf)."""
        return self.psi[self.mesh.elem_faces]

    @property
    def WB(self):
        return self.WF[self.mesh.elem_faces]

    @property
    def n_trace_dofs(self) -> int:
        return self.mesh.n_faces * self.nf

    # -- helpers -----------------------------------------------------------
    def element_load(self, values):
        """(v, phi_i)_K for values at element quadrature points -> (nt, nb)."""
        return np.einsum("eq,eq,eqi->ei", self.W, values, self.phi)

    def face_load(self, values, faces):
        """<v, psi_m>_F for values at the quadrature points of ``faces``."""
        faces = np.asarray(faces)
        return np.einsum("fq,fq,fqm->fm", self.WF[faces], values, self.psi[faces])

    def eval_element(self, coeffs):
        """Evaluate per-element coefficients (nt, nb) at element qps."""
        return np.einsum("eqi,ei->eq", self.phi, coeffs)

    def eval_element_boundary(self, coeffs):
        return np.einsum("elqi,ei->elq", self.phi_b, coeffs)

    def eval_trace(self, trace, faces=None):
        """Evaluate trace coefficients (nfaces, nf) at face qps."""
        if faces is None:
            return np.einsum("fqm,fm->fq", self.psi, trace)
        faces = np.asarray(faces)
        return np.einsum("fqm,fm->fq", self.psi[faces], trace[faces])


# -- projections and integration --------------------------------------------

def _as_field(f):
    if callable(f):
        return f
    c = float(f)
    return lambda x: np.full(x.shape[:-1], c)


def integrate(f, mesh: TriMesh, elem: int | None = None, face: int | None = None,
              degree: int = 4) -> float:
    """Integrate a scalar field over one element or one face."""
    f = _as_field(f)
    if (elem is None) == (face is None):
        raise ValueError("give exactly one of elem, face")
    if elem is not None:
        X, W = map_to_elements(mesh, triangle_rule(degree), [elem])
    else:
        X, W = map_to_faces(mesh, edge_rule(degree), [face])
    return float(np.sum(W[0] * f(X[0])))


def project_element(f, mesh: TriMesh, elem: int, j: int, degree: int | None = None,
                    basis: ElementBasis | None = None) -> np.ndarray:
    """Coefficients of the L2(K) projection onto P^j(K) in the orthonormal basis."""
    f = _as_field(f)
    degree = 2 * j + 2 if degree is None else degree
    basis = ElementBasis(mesh, j) if basis is None else basis
    X, W = map_to_elements(mesh, triangle_rule(degree), [elem])
    phi = basis.values(X, [elem])[0]
    return phi.T @ (W[0] * f(X[0]))


def project_face(f, mesh: TriMesh, face: int, j: int, degree: int | None = None) -> np.ndarray:
    """Coefficients of the L2(F) projection onto P^j(F) (face parameter basis)."""
    f = _as_field(f)
    degree = 2 * j + 2 if degree is None else degree
    rule = edge_rule(degree)
    X, W = map_to_faces(mesh, rule, [face])
    psi = face_basis_values(j, rule.points, mesh.face_lengths[face])
    return psi.T @ (W[0] * f(X[0]))
