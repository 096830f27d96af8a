"""Self-check suites behind the CLI verification subcommands.

These deliberately recompute results along independent routes: the
probability bound chain is checked against Monte-Carlo ball integrals, and
the active-set projection against brute-force enumeration of active
subsets.  Slow is fine here; these run on demand, not in the planning loop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chance import (PositionBelief, ScaleConstraintSet, hyperplane_probability,
                     mc_collision_probability, min_distance_bound, xi_from_pcoll)
from .qp import ProjectionProblem, project_scale_derivative


@dataclass
class BoundReport:
    xi: float
    instances: int
    max_mc_minus_hyperplane: float   # > 0 would mean the bound chain failed
    max_mc_at_bound: float
    p_coll_bound: float
    threshold_at_bound: float        # p_coll + 3 * MC stderr
    passed: bool


def verify_bound(p_coll: float, samples: int = 100_000, instances: int = 200,
                 seed: int = 0) -> BoundReport:
    """Check the probability bound chain on random pair instances.

    Two properties: the hyperplane integral upper-bounds the Monte-Carlo
    ball integral (within MC noise), and with the means placed exactly at
    the distance bound under isotropic covariance the collision probability
    stays below the configured limit.
    """
    xi = xi_from_pcoll(p_coll)
    rng = np.random.default_rng(seed)
    samples = int(samples)

    worst_gap = -np.inf
    for k in range(instances):
        r_i, r_j = rng.uniform(0.05, 0.4, size=2)
        eps = rng.uniform(0.0, 0.2)
        radius = r_i + r_j + eps
        sig_i = _random_cov(rng)
        sig_j = _random_cov(rng)
        direction = _random_unit(rng)
        dist = rng.uniform(0.2, 2.5) * radius
        b_i = PositionBelief(np.zeros(2), sig_i)
        b_j = PositionBelief(dist * direction, sig_j)
        mc = mc_collision_probability(b_i, b_j, r_i, r_j, eps,
                                      samples=samples, rng_seed=seed + 1 + k)
        hyp = hyperplane_probability(b_i, b_j, r_i, r_j, eps)
        stderr = np.sqrt(max(mc * (1.0 - mc), 1e-12) / samples)
        worst_gap = max(worst_gap, mc - 3.0 * stderr - hyp)

    worst_at_bound = 0.0
    stderr_bound = np.sqrt(p_coll * (1.0 - p_coll) / samples)
    for k in range(20):
        lam = rng.uniform(0.002, 0.05)
        r_i, r_j = rng.uniform(0.1, 0.4, size=2)
        eps = rng.uniform(0.0, 0.2)
        bound = min_distance_bound(r_i, r_j, eps, xi, 2.0 * lam)
        b_i = PositionBelief(np.zeros(2), lam * np.eye(2))
        b_j = PositionBelief(bound * _random_unit(rng), lam * np.eye(2))
        mc = mc_collision_probability(b_i, b_j, r_i, r_j, eps,
                                      samples=samples, rng_seed=seed + 5000 + k)
        worst_at_bound = max(worst_at_bound, mc)

    threshold = p_coll + 3.0 * stderr_bound
    return BoundReport(
        xi=xi,
        instances=instances,
        max_mc_minus_hyperplane=float(worst_gap),
        max_mc_at_bound=float(worst_at_bound),
        p_coll_bound=p_coll,
        threshold_at_bound=float(threshold),
        passed=bool(worst_gap <= 0.0 and worst_at_bound <= threshold),
    )


@dataclass
class QpReport:
    problems: int
    max_objective_gap: float
    max_infeasibility: float
    passed: bool


def verify_qp(problems: int = 1000, seed: int = 0, max_rows: int = 6) -> QpReport:
    """Compare the active-set solver with brute-force active-subset enumeration."""
    rng = np.random.default_rng(seed)
    worst_gap = 0.0
    worst_infeas = 0.0
    for _ in range(problems):
        m = int(rng.integers(1, max_rows + 1))
        s = rng.uniform(0.2, 2.0, size=2)
        A = rng.normal(size=(m, 2))
        A = A[np.linalg.norm(A, axis=1) > 1e-6]
        if A.shape[0] == 0:
            continue
        # b chosen so the current scale is feasible with some slack.
        b = A @ s - rng.uniform(0.0, 1.0, size=A.shape[0])
        target = rng.normal(scale=1.5, size=2)
        rows = ScaleConstraintSet(A, b, s)
        sol = project_scale_derivative(ProjectionProblem(target, s, rows))
        bt = b - A @ s
        ref = brute_force_projection(A, bt, target)
        obj = 0.5 * float(np.sum((target - sol.delta) ** 2))
        ref_obj = 0.5 * float(np.sum((target - ref) ** 2))
        worst_gap = max(worst_gap, abs(obj - ref_obj))
        worst_infeas = max(worst_infeas, float(np.max(bt - A @ sol.delta, initial=0.0)))
    return QpReport(
        problems=problems,
        max_objective_gap=worst_gap,
        max_infeasibility=worst_infeas,
        passed=bool(worst_gap <= 1e-8 and worst_infeas <= 1e-9),
    )


def brute_force_projection(A: np.ndarray, bt: np.ndarray, target: np.ndarray
                           ) -> np.ndarray | None:
    """Minimise 0.5||target - d||^2 s.t. A d >= bt by enumerating active subsets."""
    m = A.shape[0]
    best, best_obj = None, np.inf
    candidates = [target.copy()]
    for i in range(m):
        candidates.append(_equality_solution(A[[i]], bt[[i]], target))
    for i in range(m):
        for j in range(i + 1, m):
            candidates.append(_equality_solution(A[[i, j]], bt[[i, j]], target))
    for cand in candidates:
        if cand is None:
            continue
        if np.min(A @ cand - bt, initial=0.0) < -1e-9:
            continue
        obj = 0.5 * float(np.sum((target - cand) ** 2))
        if obj < best_obj:
            best, best_obj = cand, obj
    return best


def _equality_solution(Aw: np.ndarray, bw: np.ndarray, target: np.ndarray
                       ) -> np.ndarray | None:
    # min ||target - d|| s.t. Aw d = bw  ->  d = target - Aw^T nu,
    # (Aw Aw^T) nu = Aw target - bw; least squares handles dependent rows.
    gram = Aw @ Aw.T
    rhs = Aw @ target - bw
    nu, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    d = target - Aw.T @ nu
    if np.max(np.abs(Aw @ d - bw)) > 1e-8:
        return None  # inconsistent equality system
    return d


def _random_cov(rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(scale=0.15, size=(2, 2))
    return a @ a.T + rng.uniform(1e-4, 1e-3) * np.eye(2)


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([np.cos(angle), np.sin(angle)])
