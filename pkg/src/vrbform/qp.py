"""Least-distance projection of the scale step onto stacked half-planes.

Solves  min 0.5 ||target - d||^2  s.t.  A (s + d) >= b  with a primal
active-set method specialised to two variables: equality subproblems are
direct 1- or 2-row solves, blocking constraints are found by ratio test,
and rows are dropped on negative multipliers.  Problems here have at most
a handful of rows (one per other robot), so no factorisation reuse or
warm starting is worth the code.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chance import ScaleConstraintSet

_FEAS_TOL = 1e-9
_MULT_TOL = 1e-10
_MAX_ITER = 50

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE_FALLBACK = "infeasible-fallback"


class SolverStallError(RuntimeError):
    """Active-set iteration cap exceeded."""


@dataclass
class ProjectionProblem:
    target: np.ndarray        # desired scale derivative
    current_scale: np.ndarray
    rows: ScaleConstraintSet

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float).reshape(2)
        self.current_scale = np.asarray(self.current_scale, dtype=float).reshape(2)
        if not np.all(np.isfinite(self.target)) or not np.all(np.isfinite(self.current_scale)):
            raise ValueError("projection inputs must be finite")


@dataclass
class ActiveSetSolution:
    delta: np.ndarray
    active_rows: list[int] = field(default_factory=list)
    iterations: int = 0
    status: str = STATUS_OPTIMAL


def project_scale_derivative(problem: ProjectionProblem) -> ActiveSetSolution:
    """Project the scale derivative onto the constraint rows.

    Returns the unique minimiser when the rows admit one; if the rows are
    mutually infeasible the scale step is frozen (delta = 0) and the status
    says so -- a formation that stops rescaling is safe by inaction.
    """
    A = problem.rows.a
    bt = problem.rows.b - A @ problem.current_scale  # constraint: A d >= bt
    m = A.shape[0]
    if m == 0:
        return ActiveSetSolution(problem.target.copy(), [], 0, STATUS_OPTIMAL)

    x = np.zeros(2)
    if np.min(A @ x - bt) < -_FEAS_TOL:
        start = _feasible_point(A, bt)
        if start is None:
            return ActiveSetSolution(np.zeros(2), [], 0, STATUS_INFEASIBLE_FALLBACK)
        x = start

    work: list[int] = []
    for it in range(1, _MAX_ITER + 1):
        p = _equality_step(problem.target, x, A, work)
        if np.linalg.norm(p) <= 1e-12:
            lam = _multipliers(problem.target, x, A, work)
            if lam.size == 0 or np.min(lam) >= -_MULT_TOL:
                return ActiveSetSolution(x, sorted(work), it, STATUS_OPTIMAL)
            work.pop(int(np.argmin(lam)))
            continue
        # Ratio test against rows not in the working set; first (lowest
        # index) strict improvement wins so solves are deterministic.
        alpha, blocker = 1.0, None
        for i in range(m):
            if i in work:
                continue
            slope = float(A[i] @ p)
            if slope >= -1e-14:
                continue
            ratio = (bt[i] - float(A[i] @ x)) / slope
            if ratio < alpha - 1e-14:
                alpha, blocker = ratio, i
        x = x + max(alpha, 0.0) * p
        if blocker is not None:
            work.append(blocker)
    raise SolverStallError(f"no convergence in {_MAX_ITER} active-set iterations")


def _equality_step(target: np.ndarray, x: np.ndarray, A: np.ndarray,
                   work: list[int]) -> np.ndarray:
    """Step from x toward target restricted to the active rows' tangent space."""
    v = target - x
    if not work:
        return v
    if len(work) == 1:
        a = A[work[0]]
        return v - a * (float(a @ v) / float(a @ a))
    return np.zeros(2)  # two independent rows pin the point in 2-D


def _multipliers(target: np.ndarray, x: np.ndarray, A: np.ndarray,
                 work: list[int]) -> np.ndarray:
    """KKT multipliers of the active rows: solve A_w^T lam = x - target."""
    if not work:
        return np.zeros(0)
    g = x - target
    Aw = A[work]
    if len(work) == 1:
        a = Aw[0]
        return np.array([float(a @ g) / float(a @ a)])
    return np.linalg.lstsq(Aw.T, g, rcond=None)[0]


def _feasible_point(A: np.ndarray, bt: np.ndarray) -> np.ndarray | None:
    """Closest-to-origin feasible point, by candidate enumeration.

    In 2-D, if the polyhedron {A d >= bt} is nonempty, the projection of the
    origin onto it is either a row hyperplane's foot point or a vertex of two
    rows, so enumerating those suffices.
    """
    candidates = []
    m = A.shape[0]
    for i in range(m):
        a = A[i]
        candidates.append(a * (bt[i] / float(a @ a)))
    for i in range(m):
        for j in range(i + 1, m):
            M = np.array([A[i], A[j]])
            det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
            if abs(det) < 1e-12 * max(1.0, np.abs(M).max() ** 2):
                continue
            candidates.append(np.linalg.solve(M, np.array([bt[i], bt[j]])))
    feasible = [c for c in candidates if np.min(A @ c - bt) >= -_FEAS_TOL]
    if not feasible:
        return None
    return min(feasible, key=lambda c: float(c @ c))
