"""Box-constrained Neumann boundary control: projection and fixed-point loop.

The control is never expanded in a basis.  It lives at the quadrature nodes
of the boundary faces and is always ``clamp(-zhat_h / alpha)`` of the
discrete adjoint trace (possibly damped against the previous iterate).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

from .discretization import Space
from .hdg import ConfigurationError, HdgField, HdgOperator, HdgOperatorConfig
from .mesh import TriMesh

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControlBounds:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ConfigurationError(f"need lower < upper, got [{self.lower}, {self.upper}]")

    def contains(self, v) -> bool:
        v = np.asarray(v)
        return bool(np.all((v >= self.lower) & (v <= self.upper)))


def project_admissible(v, bounds: ControlBounds):
    """Pointwise L2 projection onto the box: min(upper, max(lower, v))."""
    return np.minimum(bounds.upper, np.maximum(bounds.lower, v))


def control_update(zhat, alpha: float, bounds: ControlBounds, rho: float = 1.0, u_prev=None):
    """New control at boundary nodes from the adjoint trace values there."""
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    if not 0 < rho <= 1:
        raise ConfigurationError("damping must lie in (0, 1]")
    target = project_admissible(-np.asarray(zhat) / alpha, bounds)
    if rho == 1.0 or u_prev is None:
        return target
    return (1.0 - rho) * np.asarray(u_prev) + rho * target


@dataclass(frozen=True)
class FixedPointConfig:
    tol: float = 1e-8
    max_iter: int = 50
    rho: float = 1.0
    tau_scale: float = 1.0
    solver: str = "cg"

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ConfigurationError("rho must lie in (0, 1]")
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigurationError("invalid fixed-point tolerance or iteration cap")


@dataclass
class ControlIterate:
    """The discrete control at the boundary quadrature nodes.

    ``values`` is the control that drove the returned state solve;
    ``zhat`` the adjoint trace at the same nodes.
    """

    values: np.ndarray   # (nbf, nqf)
    zhat: np.ndarray     # (nbf, nqf)
    alpha: float
    bounds: ControlBounds
    points: np.ndarray   # (nbf, nqf, 2)
    weights: np.ndarray  # (nbf, nqf)
    iteration: int = 0
    history: list = field(default_factory=list)

    def projected(self):
        return project_admissible(-self.zhat / self.alpha, self.bounds)

    def projection_residual(self) -> float:
        """max |u_h - clamp(-zhat_h / alpha)| over boundary nodes."""
        return float(np.max(np.abs(self.values - self.projected())))

    def norm(self, values=None) -> float:
        v = self.values if values is None else values
        return float(np.sqrt(np.sum(self.weights * v * v)))


@dataclass
class FixedPointReport:
    converged: bool
    iterations: int
    history: list


@dataclass
class OptimalitySolution:
    state: HdgField
    adjoint: HdgField
    control: ControlIterate
    report: FixedPointReport
    operator: HdgOperator
    alpha: float

    @property
    def space(self) -> Space:
        return self.state.space

    @property
    def mesh(self) -> TriMesh:
        return self.state.mesh


class FixedPointError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def boundary_nodes(space: Space):
    """Points, weights and outward normals of the boundary quadrature nodes."""
    mesh = space.mesh
    bf = mesh.boundary_faces
    X, W = space.XF[bf], space.WF[bf]
    n = np.broadcast_to(mesh.face_normals[bf][:, None, :], X.shape)
    return X, W, n


def solve_optimality(mesh: TriMesh, problem, k: int, config: FixedPointConfig | None = None,
                     operator: HdgOperator | None = None) -> OptimalitySolution:
    """Fixed-point iteration state -> adjoint -> projected control update.

    Starts from u = 0 and stops when the L2(boundary) change of the control
    drops below ``config.tol``.
    """
    config = config or FixedPointConfig()
    if problem.alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    if operator is None:
        space = Space(mesh, k)
        operator = HdgOperator(space, HdgOperatorConfig(k=k, tau_scale=config.tau_scale,
                                                        solver=config.solver))
    space = operator.space
    bf = mesh.boundary_faces
    XB, WB, nB = boundary_nodes(space)

    f_load = operator.source_load(problem.f)
    g_vals = problem.g(XB, nB)
    g1_load = space.face_load(problem.g1(XB, nB), bf)
    yd_vals = problem.y_d(space.X)

    u = np.zeros_like(WB)
    history = []
    xs = xa = None
    for it in range(1, config.max_iter + 1):
        state = operator.solve(f_load, space.face_load(u + g_vals, bf), x0=xs)
        src = space.element_load(state.scalar_at_qp() - yd_vals)
        adjoint = operator.solve(src, g1_load, x0=xa)
        xs, xa = state.trace.ravel(), adjoint.trace.ravel()
        zhat = space.eval_trace(adjoint.trace, bf)
        u_new = control_update(zhat, problem.alpha, problem.bounds, config.rho, u)
        diff = float(np.sqrt(np.sum(WB * (u_new - u) ** 2)))
        history.append(diff)
        log.debug("fixed point %d: |du| = %.3e", it, diff)
        if diff <= config.tol:
            control = ControlIterate(u, zhat, problem.alpha, problem.bounds, XB, WB, it, history)
            report = FixedPointReport(True, it, history)
            return OptimalitySolution(state, adjoint, control, report, operator, problem.alpha)
        u = u_new
    raise FixedPointError(
        f"fixed point did not converge in {config.max_iter} iterations "
        f"(last change {history[-1]:.3e})", history)
