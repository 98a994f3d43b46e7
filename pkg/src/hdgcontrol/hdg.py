"""HDG discretisation of  -div grad y + y = f,  grad y . n = h  on the boundary.

Mixed form with flux p = -grad y.  Unknowns per element: p_h in P^k(K)^2 and
y_h in P^k(K); per face: the trace yhat_h in P^k(F).  The numerical flux is

    phat_h . n = p_h . n + tau (y_h - yhat_h),    tau = tau_scale / h_K.

Element unknowns are eliminated locally (static condensation) and the
symmetric positive definite trace system is solved by Jacobi-preconditioned
conjugate gradients.

Local block ordering of an element matrix: [p_x, p_y, y, mu_0, mu_1, mu_2],
with mu_e the trace on local edge e.  Rows are test functions, columns
trial functions, so that ``B(trial; test) = test @ L @ trial``.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .discretization import Space
from .mesh import TriMesh

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class HdgOperatorConfig:
    k: int = 1
    tau_scale: float = 1.0
    solver: str = "cg"  # "cg" or "direct"
    rtol: float = 1e-12

    def __post_init__(self):
        if self.tau_scale <= 0:
            raise ConfigurationError("stabilization must be positive")
        if self.solver not in ("cg", "direct"):
            raise ConfigurationError(f"unknown solver {self.solver!r}")


@dataclass
class HdgField:
    """One discrete HDG solution: flux, scalar and trace coefficients."""

    space: Space
    flux: np.ndarray    # (nt, 2, nb)
    scalar: np.ndarray  # (nt, nb)
    trace: np.ndarray   # (nfaces, nf)
    tau: np.ndarray     # (nt,)

    @property
    def mesh(self) -> TriMesh:
        return self.space.mesh

    @property
    def k(self) -> int:
        return self.space.k

    def flux_at_qp(self):
        return np.einsum("eqi,edi->eqd", self.space.phi, self.flux)

    def flux_divergence_at_qp(self):
        return np.einsum("eqid,edi->eq", self.space.dphi, self.flux)

    def scalar_at_qp(self):
        return self.space.eval_element(self.scalar)

    def scalar_gradient_at_qp(self):
        return np.einsum("eqid,ei->eqd", self.space.dphi, self.scalar)

    def scalar_on_boundary(self):
        """y_h on each element edge, (nt, 3, nqf)."""
        return self.space.eval_element_boundary(self.scalar)

    def trace_on_boundary(self):
        """yhat_h seen from each element edge, (nt, 3, nqf)."""
        return np.einsum("elqm,elm->elq", self.space.psi_b, self.trace[self.mesh.elem_faces])

    def normal_flux_on_boundary(self):
        """phat_h . n on each element edge, (nt, 3, nqf)."""
        s = self.space
        pn = np.einsum("elqi,edi,eld->elq", s.phi_b, self.flux, self.mesh.normals)
        return pn + self.tau[:, None, None] * (self.scalar_on_boundary() - self.trace_on_boundary())


def stabilization(mesh: TriMesh, tau_scale: float = 1.0) -> np.ndarray:
    if tau_scale <= 0:
        raise ConfigurationError("stabilization must be positive")
    return tau_scale / mesh.diameters


def assemble_local(space: Space, tau) -> np.ndarray:
    """Element matrices of the bilinear form B, shape (nt, 3nb+3nf, 3nb+3nf)."""
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (space.mesh.n_elements,))
    if np.any(tau <= 0):
        raise ConfigurationError("stabilization must be positive on every element boundary")
    nb, nf = space.nb, space.nf
    nt = space.mesh.n_elements
    n = 3 * nb + 3 * nf
    L = np.zeros((nt, n, n))
    W, phi, dphi = space.W, space.phi, space.dphi
    mass = np.einsum("eq,eqi,eqj->eij", W, phi, phi)
    # D[d][i, j] = (d/dx_d phi_i, phi_j)
    D = np.einsum("eq,eqid,eqj->deij", W, dphi, phi)
    WB, phib, psib = space.WB, space.phi_b, space.psi_b
    nrm = space.mesh.normals  # (nt, 3, 2)
    # N[d][e][i, m] = <psi_m, phi_i n_d>_e ;  P[e][i, m] = <psi_m, phi_i>_e
    P = np.einsum("elq,elqi,elqm->elim", WB, phib, psib)
    N = P[None] * np.moveaxis(nrm, -1, 0)[..., None, None]
    Mb = np.einsum("elq,elqi,elqj->eij", WB, phib, phib)
    Mf = np.einsum("elq,elqm,elqn->elmn", WB, psib, psib)

    px, py, y = slice(0, nb), slice(nb, 2 * nb), slice(2 * nb, 3 * nb)
    pcomp = (px, py)
    L[:, px, px] = mass
    L[:, py, py] = mass
    L[:, y, y] = mass + tau[:, None, None] * Mb
    for d in range(2):
        L[:, pcomp[d], y] = -D[d]
        L[:, y, pcomp[d]] = np.swapaxes(D[d], 1, 2)
    for e in range(3):
        mu = slice(3 * nb + e * nf, 3 * nb + (e + 1) * nf)
        for d in range(2):
            L[:, pcomp[d], mu] = N[d][:, e]
            L[:, mu, pcomp[d]] = -np.swapaxes(N[d][:, e], 1, 2)
        L[:, y, mu] = -tau[:, None, None] * P[:, e]
        L[:, mu, y] = -tau[:, None, None] * np.swapaxes(P[:, e], 1, 2)
        L[:, mu, mu] = tau[:, None, None] * Mf[:, e]
    return L


def local_operator(space: Space, elem: int, tau) -> np.ndarray:
    """Matrix of B restricted to one element and its three faces."""
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (space.mesh.n_elements,))
    if tau[elem] <= 0:
        raise ConfigurationError("stabilization must be positive")
    return assemble_local(space, tau)[elem]


@dataclass
class TraceSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: np.ndarray  # (nt, 3nf) global trace dofs of each element


class HdgOperator:
    """Condensed HDG operator on a fixed mesh.

    The trace matrix depends only on the mesh, k and tau, so it is built once
    and reused for every right-hand side (state and adjoint solves, all
    fixed-point iterations).
    """

    def __init__(self, space: Space, config: HdgOperatorConfig | None = None):
        self.space = space
        self.config = config or HdgOperatorConfig(k=space.k)
        mesh = space.mesh
        self.tau = stabilization(mesh, self.config.tau_scale)
        nb, nf = space.nb, space.nf
        nu = 3 * nb
        L = assemble_local(space, self.tau)
        Auu, Aul = L[:, :nu, :nu], L[:, :nu, nu:]
        Alu, All = L[:, nu:, :nu], L[:, nu:, nu:]
        cond = np.linalg.cond(Auu)
        if not np.all(np.isfinite(cond)) or cond.max() > 1e14:
            raise SolverError("singular local block")
        Ainv = np.linalg.inv(Auu)
        self._Z = Ainv @ Aul                       # (nt, nu, 3nf)
        self._Aw = Ainv[:, :, 2 * nb:]              # response to scalar loads
        self._R = Alu @ self._Aw                    # (nt, 3nf, nb)
        S = All - Alu @ self._Z
        S = 0.5 * (S + np.swapaxes(S, 1, 2))
        F = mesh.elem_faces
        self.dofmap = (F[:, :, None] * nf + np.arange(nf)).reshape(len(F), -1)
        rows = np.repeat(self.dofmap, 3 * nf, axis=1).ravel()
        cols = np.tile(self.dofmap, (1, 3 * nf)).ravel()
        n = space.n_trace_dofs
        self.matrix = sp.coo_matrix((S.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        self._lu = None

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]

    def rhs(self, source_load, neumann_load=None):
        """Condensed right-hand side.

        ``source_load`` is (f, phi_i)_K per element (nt, nb); ``neumann_load``
        is <h, psi_m>_F on the boundary faces (nbf, nf).
        """
        nf = self.space.nf
        b = np.zeros(self.n_dofs)
        np.add.at(b, self.dofmap.ravel(), -np.einsum("eli,ei->el", self._R, source_load).ravel())
        if neumann_load is not None:
            bf = self.space.mesh.boundary_faces
            idx = (bf[:, None] * nf + np.arange(nf)).ravel()
            np.add.at(b, idx, np.asarray(neumann_load).ravel())
        return b

    def system(self, source_load, neumann_load=None) -> TraceSystem:
        return TraceSystem(self.matrix, self.rhs(source_load, neumann_load), self.dofmap)

    def recover(self, trace, source_load):
        """Local recovery of (flux, scalar) from the trace and the source."""
        nb = self.space.nb
        lam = trace.reshape(-1)[self.dofmap]
        U = np.einsum("eui,ei->eu", self._Aw, source_load) - np.einsum("eul,el->eu", self._Z, lam)
        flux = U[:, :2 * nb].reshape(-1, 2, nb)
        return flux, U[:, 2 * nb:]

    def solve_trace(self, b, x0=None):
        if self.config.solver == "direct":
            if self._lu is None:
                self._lu = splu(self.matrix.tocsc())
            return self._lu.solve(b)
        return solve_trace(TraceSystem(self.matrix, b, self.dofmap), x0=x0, rtol=self.config.rtol)

    def solve(self, source_load, neumann_load=None, x0=None) -> HdgField:
        b = self.rhs(source_load, neumann_load)
        x = self.solve_trace(b, x0=x0)
        trace = x.reshape(-1, self.space.nf)
        flux, scalar = self.recover(trace, source_load)
        return HdgField(self.space, flux, scalar, trace, self.tau)

    # data helpers ---------------------------------------------------------
    def source_load(self, f):
        """Load vector of a callable source, a constant, or values at element qps."""
        s = self.space
        vals = f(s.X) if callable(f) else np.broadcast_to(np.asarray(f, dtype=float), s.W.shape)
        return s.element_load(vals)

    def neumann_load(self, h):
        """Load of callable h(x, n) or of values at boundary face qps."""
        s = self.space
        bf = s.mesh.boundary_faces
        if callable(h):
            n = np.broadcast_to(s.mesh.face_normals[bf][:, None, :], s.XF[bf].shape)
            h = h(s.XF[bf], n)
        return s.face_load(np.broadcast_to(np.asarray(h, dtype=float), s.WF[bf].shape), bf)


def condense(space: Space, source, neumann=None, config: HdgOperatorConfig | None = None) -> TraceSystem:
    op = HdgOperator(space, config)
    nl = None if neumann is None else op.neumann_load(neumann)
    return op.system(op.source_load(source), nl)


def solve_trace(system: TraceSystem, x0=None, rtol: float = 1e-12, maxiter: int | None = None):
    """Jacobi-preconditioned conjugate gradients on the trace system."""
    A, b = system.matrix, np.asarray(system.rhs, dtype=float)
    n = len(b)
    if maxiter is None:
        maxiter = int(20 * np.sqrt(n)) + 500
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix diagonal not positive")
    dinv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    target = rtol * bnorm
    for it in range(maxiter):
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            log.debug("pcg converged in %d iterations", it)
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("matrix not positive definite", rnorm / bnorm, it)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    rnorm = np.linalg.norm(b - A @ x)
    if rnorm <= target:
        return x
    raise SolverError(f"pcg did not converge in {maxiter} iterations "
                      f"(relative residual {rnorm / bnorm:.3e})", rnorm / bnorm, maxiter)


def recover_local(op: HdgOperator, elem: int, trace_local, source_load_local):
    """Recover (flux (2, nb), scalar (nb,)) on one element."""
    nb = op.space.nb
    U = op._Aw[elem] @ source_load_local - op._Z[elem] @ np.ravel(trace_local)
    return U[:2 * nb].reshape(2, nb), U[2 * nb:]


def numerical_flux(field: HdgField, elem: int, local_edge: int) -> np.ndarray:
    """phat_h . n on one element edge as coefficients of the face basis."""
    s = field.space
    vals = field.normal_flux_on_boundary()[elem, local_edge]
    w = s.WB[elem, local_edge]
    return s.psi_b[elem, local_edge].T @ (w * vals)


def transmission_residual(field: HdgField) -> np.ndarray:
    """sum over element sides of <phat . n, mu> for every face and mu (nfaces, nf)."""
    s = field.space
    contrib = np.einsum("elq,elq,elqm->elm", s.WB, field.normal_flux_on_boundary(), s.psi_b)
    out = np.zeros((s.mesh.n_faces, s.nf))
    np.add.at(out, s.mesh.elem_faces.ravel(), contrib.reshape(-1, s.nf))
    return out


def bilinear_form(space: Space, tau, v1, v2) -> float:
    """B(r1, w1, mu1; r2, w2, mu2; tau) by direct quadrature.

    Each argument is (flux (nt, 2, nb), scalar (nt, nb), trace (nfaces, nf)).
    """
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (space.mesh.n_elements,))
    mesh = space.mesh
    W, WB = space.W, space.WB

    def parts(v):
        r, w, mu = v
        rq = np.einsum("eqi,edi->eqd", space.phi, r)
        divr = np.einsum("eqid,edi->eq", space.dphi, r)
        wq = space.eval_element(w)
        rb = np.einsum("elqi,edi,eld->elq", space.phi_b, r, mesh.normals)
        wb = space.eval_element_boundary(w)
        mub = np.einsum("elqm,elm->elq", space.psi_b, mu[mesh.elem_faces])
        return rq, divr, wq, rb, wb, mub

    r1, d1, w1, rn1, wb1, m1 = parts(v1)
    r2, d2, w2, rn2, wb2, m2 = parts(v2)
    t = tau[:, None, None]
    val = np.sum(W[..., None] * r1 * r2)
    val += np.sum(W * (-w1 * d2 + d1 * w2 + w1 * w2))
    val += np.sum(WB * (m1 * rn2 + t * (wb1 - m1) * wb2 - (rn1 + t * (wb1 - m1)) * m2))
    return float(val)
