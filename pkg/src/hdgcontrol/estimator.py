"""Residual error estimator, data oscillation and true errors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import project_admissible
from .discretization import ElementBasis, face_basis_values, map_to_elements
from .hdg import HdgField
from .mesh import TriMesh
from .quadrature import composite_triangle_rule, edge_rule, subdivide_reference, triangle_rule


@dataclass
class EstimatorBreakdown:
    """Per-element estimator terms (all non-negative magnitudes, not squares)."""

    s1: np.ndarray   # ||p_h + grad y_h||_K
    s2: np.ndarray   # h_K ||f - div p_h - y_h||_K
    sb: np.ndarray   # h_K^{-1/2} ||y_h - yhat_h||_dK
    as1: np.ndarray
    as2: np.ndarray
    asb: np.ndarray

    @property
    def eta_s_K2(self):
        return self.s1 ** 2 + self.s2 ** 2 + self.sb ** 2

    @property
    def eta_as_K2(self):
        return self.as1 ** 2 + self.as2 ** 2 + self.asb ** 2

    @property
    def eta_K2(self):
        return self.eta_s_K2 + self.eta_as_K2

    @property
    def eta_s(self) -> float:
        return float(np.sqrt(self.eta_s_K2.sum()))

    @property
    def eta_as(self) -> float:
        return float(np.sqrt(self.eta_as_K2.sum()))

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.eta_K2.sum()))


def field_residuals(field: HdgField, source_values):
    """The three residual terms of one HDG field.

    ``source_values`` is the right-hand side of the scalar equation at the
    element quadrature points (f for the state, y_h - y_d for the adjoint).
    """
    s = field.space
    h = s.mesh.diameters
    W = s.W
    r1 = field.flux_at_qp() + field.scalar_gradient_at_qp()
    t1 = np.sqrt(np.sum(W[..., None] * r1 ** 2, axis=(1, 2)))
    r2 = source_values - field.flux_divergence_at_qp() - field.scalar_at_qp()
    t2 = h * np.sqrt(np.sum(W * r2 ** 2, axis=1))
    jump = field.scalar_on_boundary() - field.trace_on_boundary()
    tb = np.sqrt(np.sum(s.WB * jump ** 2, axis=(1, 2)) / h)
    return t1, t2, tb


def estimate(solution, problem) -> EstimatorBreakdown:
    """Evaluate all six per-element terms for a converged optimality solution."""
    s = solution.space
    state, adjoint = solution.state, solution.adjoint
    s1, s2, sb = field_residuals(state, problem.f(s.X))
    adj_src = state.scalar_at_qp() - problem.y_d(s.X)
    as1, as2, asb = field_residuals(adjoint, adj_src)
    return EstimatorBreakdown(s1, s2, sb, as1, as2, asb)


# -- oscillation -----------------------------------------------------------------

@dataclass
class Oscillation:
    osc_f: np.ndarray
    osc_yd: np.ndarray

    @property
    def total_f(self) -> float:
        return float(np.sum(self.osc_f ** 2))

    @property
    def total_yd(self) -> float:
        return float(np.sum(self.osc_yd ** 2))


def projection_residual_norms(fn, mesh: TriMesh, k: int, degree: int | None = None):
    """||fn - Pi_k fn||_{0,K} for every element."""
    degree = 2 * k + 2 if degree is None else degree
    basis = ElementBasis(mesh, k)
    X, W = map_to_elements(mesh, triangle_rule(degree))
    phi = basis.values(X)
    vals = fn(X)
    coeffs = np.einsum("eq,eq,eqi->ei", W, vals, phi)
    resid = vals - np.einsum("eqi,ei->eq", phi, coeffs)
    return np.sqrt(np.sum(W * resid ** 2, axis=1))


def oscillations(problem, mesh: TriMesh, k: int) -> Oscillation:
    h = mesh.diameters
    return Oscillation(h * projection_residual_norms(problem.f, mesh, k),
                       h * projection_residual_norms(problem.y_d, mesh, k))


# -- true error --------------------------------------------------------------------

@dataclass
class ErrorReport:
    control: float = float("nan")   # ||u - u_h||_{0, boundary}
    flux: float = float("nan")      # ||p - p_h||_0
    state: float = float("nan")     # broken H1 norm of y - y_h
    adj_flux: float = float("nan")  # ||q - q_h||_0
    adjoint: float = float("nan")   # broken H1 norm of z - z_h
    eta: float | None = None
    estimator_only: bool = False

    @property
    def total(self) -> float:
        return self.control + self.flux + self.state + self.adj_flux + self.adjoint

    @property
    def effectivity(self) -> float:
        """E / eta."""
        if self.eta is None or self.estimator_only:
            return float("nan")
        return effectivity_index(self.total, self.eta)


def effectivity_index(error: float, eta: float) -> float:
    return float(error / eta) if eta > 0 else float("inf")


class _ErrorQuadrature:
    """Element quadrature of exactness 2k+4, graded towards singular points."""

    def __init__(self, solution, problem, levels: int = 6):
        s = solution.space
        mesh = s.mesh
        self.degree = 2 * s.k + 4
        base = triangle_rule(self.degree)
        self.groups = []
        special = np.zeros(mesh.n_elements, dtype=bool)
        per_vertex = {}
        for c in np.atleast_2d(problem.singular_points):
            d = np.linalg.norm(mesh.vertices[mesh.triangles] - c, axis=-1)
            hit = d.min(axis=1) < 1e-12 * max(1.0, mesh.diameters.max())
            for t in np.flatnonzero(hit):
                special[t] = True
                per_vertex[t] = int(np.argmin(d[t]))
        rest = np.flatnonzero(~special)
        if rest.size:
            self.groups.append((rest, base))
        for focus in range(3):
            elems = np.array([t for t, v in per_vertex.items() if v == focus], dtype=np.int64)
            if elems.size:
                rule = composite_triangle_rule(self.degree, subdivide_reference(levels, focus))
                self.groups.append((elems, rule))


def _element_errors(solution, problem, field_of, exact_value, exact_grad, grad_levels=6):
    """Per-element squared errors (flux, scalar L2, scalar grad) of one field."""
    s = solution.space
    mesh = s.mesh
    field: HdgField = field_of(solution)
    quad = _ErrorQuadrature(solution, problem, grad_levels)
    ef = np.zeros(mesh.n_elements)
    e0 = np.zeros(mesh.n_elements)
    e1 = np.zeros(mesh.n_elements)
    for elems, rule in quad.groups:
        X, W = map_to_elements(mesh, rule, elems)
        phi, dphi = s.basis.eval(X, elems)
        p_h = np.einsum("eqi,edi->eqd", phi, field.flux[elems])
        y_h = np.einsum("eqi,ei->eq", phi, field.scalar[elems])
        gy_h = np.einsum("eqid,ei->eqd", dphi, field.scalar[elems])
        g = exact_grad(X)
        ef[elems] = np.sum(W[..., None] * (-g - p_h) ** 2, axis=(1, 2))
        e0[elems] = np.sum(W * (exact_value(X) - y_h) ** 2, axis=1)
        e1[elems] = np.sum(W[..., None] * (g - gy_h) ** 2, axis=(1, 2))
    return ef, e0, e1


def element_errors(solution, problem):
    """Squared per-element error pieces for state and adjoint.

    Returns a dict with keys p, y, grad_y, q, z, grad_z.
    """
    ex = problem.exact
    pf, y0, y1 = _element_errors(solution, problem, lambda s: s.state, ex.y, ex.grad_y)
    qf, z0, z1 = _element_errors(solution, problem, lambda s: s.adjoint, ex.z, ex.grad_z)
    return {"p": pf, "y": y0, "grad_y": y1, "q": qf, "z": z0, "grad_z": z1}


def control_error(solution, problem) -> float:
    """||u - u_h|| on the boundary with exactness 2k+4 face quadrature."""
    s = solution.space
    mesh = s.mesh
    bf = mesh.boundary_faces
    rule = edge_rule(2 * s.k + 4)
    e = mesh.edges[bf]
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    X = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    W = mesh.face_lengths[bf][:, None] * rule.weights[None, :]
    psi = face_basis_values(s.k, rule.points, mesh.face_lengths[bf])
    zhat = np.einsum("fqm,fm->fq", psi, solution.adjoint.trace[bf])
    u_h = project_admissible(-zhat / solution.alpha, problem.bounds)
    return float(np.sqrt(np.sum(W * (problem.exact.u(X) - u_h) ** 2)))


def true_error(solution, problem, estimate: EstimatorBreakdown | float | None = None) -> ErrorReport:
    """Error components against the exact solution; E / eta when eta is given."""
    eta = estimate.eta if isinstance(estimate, EstimatorBreakdown) else estimate
    if problem.exact is None:
        return ErrorReport(eta=eta, estimator_only=True)
    e = element_errors(solution, problem)
    return ErrorReport(
        control=control_error(solution, problem),
        flux=float(np.sqrt(e["p"].sum())),
        state=float(np.sqrt(e["y"].sum() + e["grad_y"].sum())),
        adj_flux=float(np.sqrt(e["q"].sum())),
        adjoint=float(np.sqrt(e["z"].sum() + e["grad_z"].sum())),
        eta=eta,
    )
