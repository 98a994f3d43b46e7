"""Bulk (Doerfler) marking and the SOLVE -> ESTIMATE -> MARK -> REFINE loop."""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import time

import numpy as np

from .control import FixedPointConfig, FixedPointError, OptimalitySolution, solve_optimality
from .estimator import EstimatorBreakdown, ErrorReport, estimate, true_error
from .mesh import TriMesh, conformity_defects, refine_nvb, uniform_refine

log = logging.getLogger(__name__)

MAX_AFEM_ITERATIONS = 60


@dataclass(frozen=True)
class MarkingConfig:
    theta: float = 0.6

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")


def mark(eta_K2, theta: float) -> np.ndarray:
    """Smallest set whose squared indicators carry a theta-fraction of the total.

    Elements are taken by decreasing indicator, ties by increasing id.
    """
    MarkingConfig(theta)
    eta_K2 = np.asarray(eta_K2, dtype=float)
    if np.any(eta_K2 < 0):
        raise ValueError("indicators must be non-negative")
    total = eta_K2.sum()
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(eta_K2)), -eta_K2))
    csum = np.cumsum(eta_K2[order])
    # exact comparison first; guard the last element against round-off
    n = int(np.searchsorted(csum, theta * total, side="left")) + 1
    n = min(n, len(order))
    chosen = order[:n]
    if theta == 1.0:
        chosen = order[: int(np.count_nonzero(eta_K2))]
    return np.sort(chosen)


@dataclass
class AfemRecord:
    iteration: int
    n_elements: int
    n_dofs: int
    eta_s: float
    eta_as: float
    eta: float
    error: float = float("nan")
    effectivity: float = float("nan")
    fp_iterations: int = 0
    seconds: float = 0.0

    CSV_FIELDS = ("iter", "n_elem", "n_dof", "eta_s", "eta_as", "eta", "E", "iota",
                  "fp_iters", "seconds")

    def as_row(self) -> dict:
        return dict(zip(self.CSV_FIELDS, (
            self.iteration, self.n_elements, self.n_dofs, self.eta_s, self.eta_as,
            self.eta, self.error, self.effectivity, self.fp_iterations, self.seconds)))


@dataclass
class AfemStep:
    """Everything produced on one mesh, kept when ``keep_steps`` is set."""

    mesh: TriMesh
    solution: OptimalitySolution
    estimate: EstimatorBreakdown
    error: ErrorReport | None


@dataclass
class AfemResult:
    records: list
    mesh: TriMesh
    solution: OptimalitySolution | None
    estimate: EstimatorBreakdown | None
    stop_reason: str
    steps: list = field(default_factory=list)


class AfemError(RuntimeError):
    def __init__(self, message, iteration, records):
        super().__init__(message)
        self.iteration = iteration
        self.records = records


def trace_dofs(mesh: TriMesh, k: int) -> int:
    return mesh.n_faces * (k + 1)


def afem_run(problem, k: int, theta: float = 0.6, budget: int = 30_000, mode: str = "adaptive",
             fp: FixedPointConfig | None = None, max_iterations: int = MAX_AFEM_ITERATIONS,
             mesh: TriMesh | None = None, check_conformity: bool = False,
             keep_steps: bool = False, callback=None,
             max_elements: int | None = None, on_step=None) -> AfemResult:
    """Adaptive (or uniform) refinement until the trace DOF budget is exceeded.

    Every mesh is solved from scratch with zero initial control.  The loop
    stops after the first mesh whose DOF count exceeds ``budget`` (or whose
    element count reaches ``max_elements``), when the estimator vanishes, or
    after ``max_iterations`` meshes.

    ``callback`` receives each :class:`AfemRecord`; ``on_step`` receives each
    :class:`AfemStep` (mesh, solution, estimator, error) without the run
    having to keep them all.
    """
    if mode not in ("adaptive", "uniform"):
        raise ValueError(f"mode must be 'adaptive' or 'uniform', got {mode!r}")
    MarkingConfig(theta)
    mesh = problem.initial_mesh if mesh is None else mesh
    if budget <= trace_dofs(mesh, k):
        raise ValueError(f"budget {budget} does not exceed the initial {trace_dofs(mesh, k)} DOFs")
    fp = fp or FixedPointConfig()
    records, steps = [], []
    solution = est = None
    stop = "iteration cap"
    for it in range(max_iterations):
        t0 = time.perf_counter()
        if check_conformity:
            defects = conformity_defects(mesh)
            if defects:
                raise AfemError(f"non-conforming mesh: {defects[0]}", it, records)
        try:
            solution = solve_optimality(mesh, problem, k, fp)
        except FixedPointError as exc:
            raise AfemError(f"AFEM iteration {it}: {exc}", it, records) from exc
        est = estimate(solution, problem)
        err = true_error(solution, problem, est) if problem.exact is not None else None
        rec = AfemRecord(
            iteration=it, n_elements=mesh.n_elements, n_dofs=trace_dofs(mesh, k),
            eta_s=est.eta_s, eta_as=est.eta_as, eta=est.eta,
            error=err.total if err else float("nan"),
            effectivity=err.effectivity if err else float("nan"),
            fp_iterations=solution.report.iterations,
        )
        step = AfemStep(mesh, solution, est, err)
        if keep_steps:
            steps.append(step)
        if on_step is not None:
            on_step(step)
        over = max_elements is not None and rec.n_elements >= max_elements
        if rec.n_dofs > budget or over:
            rec.seconds = time.perf_counter() - t0
            records.append(rec)
            if callback is not None:
                callback(rec)
            stop = "element cap" if over and rec.n_dofs <= budget else "budget"
            break
        if mode == "uniform":
            new_mesh = uniform_refine(mesh)
        else:
            marked = mark(est.eta_K2, theta)
            if marked.size == 0:
                rec.seconds = time.perf_counter() - t0
                records.append(rec)
                stop = "estimator exhausted"
                break
            new_mesh, _ = refine_nvb(mesh, marked)
        rec.seconds = time.perf_counter() - t0
        records.append(rec)
        log.info("afem %d: N=%d eta=%.3e E=%.3e", it, rec.n_dofs, rec.eta, rec.error)
        if callback is not None:
            callback(rec)
        mesh = new_mesh
    final_mesh = solution.mesh if solution is not None else mesh
    return AfemResult(records, final_mesh, solution, est, stop, steps)


def loglog_slope(n, values, last: int | None = None) -> float:
    """Least-squares slope of log(values) against log(n)."""
    n = np.asarray(n, dtype=float)
    v = np.asarray(values, dtype=float)
    if last is not None:
        n, v = n[-last:], v[-last:]
    return float(np.polyfit(np.log(n), np.log(v), 1)[0])
