"""Probabilistic collision-avoidance constraints on the scale parameters.

The pairwise collision condition ||delta_ij|| <= r_i + r_j + eps, with a
Gaussian relative-position estimate, is tightened into the deterministic
distance requirement

    ||mean delta_ij|| >= r_i + r_j + eps + xi * sqrt(lambda_max(Sigma_ij))

where xi is the normal-quantile factor matching the configured collision
probability bound and lambda_max bounds the projected variance in any
direction.  Writing the mean distance through the formation transform makes
the requirement a rotation-invariant quadratic in the scale vector,

    s^T Gamma_ij s >= gamma_ij,   Gamma_ij = diag(c_j - c_i)^2,

which is linearised around the current scale into half-plane rows stacked
per robot.  The Monte-Carlo and hyperplane probability evaluators exist to
verify the bounding chain; the planner itself only uses the rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian import normal_cdf, normal_quantile
from .vrb import BaseConfiguration

_SYM_TOL = 1e-12
_PSD_TOL = 1e-12
# Reject a pair whose base offset vanishes in both axes: the quadratic
# constraint would be vacuous and could never keep the robots apart.
_GAMMA_FLOOR = 1e-12


class DegeneratePairError(ValueError):
    """Two robots share a base point; no scale can separate them."""


class InvalidCovarianceError(ValueError):
    """Covariance is not symmetric positive semidefinite."""


class NoRealRootError(ArithmeticError):
    """The linearisation quadratic has no real root at this scale."""


class DegenerateLinearizationError(ArithmeticError):
    """The linearisation quadratic has a vanishing leading coefficient."""


class UndefinedNormalError(ValueError):
    """Mean distance vector is zero; the separating direction is undefined."""


@dataclass
class PositionBelief:
    """Gaussian position estimate: mean (m) and 2x2 covariance (m^2)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(2).copy()
        cov = np.asarray(self.covariance, dtype=float).reshape(2, 2).copy()
        if not np.all(np.isfinite(self.mean)) or not np.all(np.isfinite(cov)):
            raise InvalidCovarianceError("belief entries must be finite")
        if abs(cov[0, 1] - cov[1, 0]) > _SYM_TOL:
            raise InvalidCovarianceError(f"covariance not symmetric: {cov}")
        cov[0, 1] = cov[1, 0] = 0.5 * (cov[0, 1] + cov[1, 0])
        if np.linalg.eigvalsh(cov)[0] < -_PSD_TOL:
            raise InvalidCovarianceError(f"covariance not PSD: {cov}")
        self.covariance = cov


@dataclass
class PairConstraintQuadratic:
    """Rotation-invariant quadratic constraint s^T Gamma s >= gamma for one pair."""

    gamma_matrix: np.ndarray  # 2x2 diagonal PSD
    gamma_scalar: float
    pair: tuple[int, int] = (0, 1)

    def __post_init__(self):
        self.gamma_matrix = np.asarray(self.gamma_matrix, dtype=float).reshape(2, 2)
        self.gamma_scalar = float(self.gamma_scalar)


@dataclass
class ScaleConstraintSet:
    """Stacked half-plane rows a^T s >= b on the scale vector.

    ``pairs`` records which robot pair produced each row so callers can map
    active rows back to pair constraints.
    """

    a: np.ndarray  # (m, 2)
    b: np.ndarray  # (m,)
    linearization_point: np.ndarray  # (2,)
    pairs: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(-1, 2)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.linearization_point = np.asarray(
            self.linearization_point, dtype=float).reshape(2)
        if self.a.shape[0] != self.b.shape[0]:
            raise ValueError("row count mismatch between a and b")
        if self.a.size and (not np.all(np.isfinite(self.a))
                            or not np.all(np.isfinite(self.b))):
            raise ValueError("constraint rows must be finite")
        if self.a.size and np.any(np.linalg.norm(self.a, axis=1) == 0.0):
            raise ValueError("constraint rows must have nonzero normals")
        if not self.pairs:
            self.pairs = [(0, k + 1) for k in range(self.a.shape[0])]

    def __len__(self) -> int:
        return self.a.shape[0]


def xi_from_pcoll(p_coll_bound: float) -> float:
    """Quantile factor xi such that a +/- xi sigma interval leaves p_coll in the tail.

    Equivalently the +/- xi sigma interval has two-sided coverage
    1 - 2 p_coll.  Monotone decreasing; xi(0.5) = 0.
    """
    p = float(p_coll_bound)
    if not 0.0 < p <= 0.5:
        raise ValueError(f"collision probability bound must be in (0, 0.5], got {p}")
    if p == 0.5:
        return 0.0
    return normal_quantile(1.0 - p)


def lambda_max_2x2(m: np.ndarray) -> float:
    """Largest eigenvalue of a symmetric 2x2 matrix, closed form."""
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    half_trace = 0.5 * (a + c)
    radius = float(np.hypot(0.5 * (a - c), b))
    return half_trace + radius


def min_distance_bound(r_i: float, r_j: float, epsilon: float,
                       xi: float, lambda_max: float) -> float:
    """Lower bound on the pair mean distance implied by the chance constraint."""
    return r_i + r_j + epsilon + xi * np.sqrt(lambda_max)


def pair_quadratic(c_i, c_j, r_i: float, r_j: float, epsilon: float,
                   xi: float, sigma_pair, pair: tuple[int, int] = (0, 1)
                   ) -> PairConstraintQuadratic:
    """Build the quadratic constraint for one robot pair.

    sigma_pair is the combined covariance of the relative position estimate
    (sum of the two robots' covariances).
    """
    c_i = np.asarray(c_i, dtype=float).reshape(2)
    c_j = np.asarray(c_j, dtype=float).reshape(2)
    sigma_pair = np.asarray(sigma_pair, dtype=float).reshape(2, 2)
    if abs(sigma_pair[0, 1] - sigma_pair[1, 0]) > _SYM_TOL:
        raise InvalidCovarianceError(f"pair covariance not symmetric: {sigma_pair}")
    lmax = lambda_max_2x2(sigma_pair)
    lmin = sigma_pair[0, 0] + sigma_pair[1, 1] - lmax
    if lmin < -_PSD_TOL:
        raise InvalidCovarianceError(f"pair covariance not PSD: {sigma_pair}")
    lmax = max(lmax, 0.0)

    d = c_j - c_i
    gamma_matrix = np.diag(d * d)
    if np.all(np.diag(gamma_matrix) < _GAMMA_FLOOR):
        raise DegeneratePairError(
            f"base points of pair {pair} coincide; constraint is vacuous")
    gamma_scalar = float(min_distance_bound(r_i, r_j, epsilon, xi, lmax) ** 2)
    return PairConstraintQuadratic(gamma_matrix, gamma_scalar, pair)


def linearize(quad: PairConstraintQuadratic, s) -> tuple[np.ndarray, float]:
    """Half-plane row a^T s' >= b supporting the quadratic boundary near s.

    The offset moves the tangency point along the Gamma s direction onto the
    boundary; the step alpha is the smaller real root of

        (s^T G^3 s) a^2 - 2 (s^T G^2 s) a + (s^T G s - gamma) = 0.

    Along the segment from s to that boundary point, every point satisfying
    the row also satisfies the quadratic, so the row is a sound local
    stand-in for it.
    """
    s = np.asarray(s, dtype=float).reshape(2)
    g = np.diag(quad.gamma_matrix)
    a_vec = g * s
    s2 = s * s
    coef_a = float(np.dot(s2, g ** 3))
    coef_b = -2.0 * float(np.dot(s2, g ** 2))
    coef_c = float(np.dot(s2, g)) - quad.gamma_scalar
    if coef_a <= 1e-15:
        raise DegenerateLinearizationError(
            f"vanishing leading coefficient for pair {quad.pair}")
    disc = coef_b * coef_b - 4.0 * coef_a * coef_c
    if disc < 0.0:
        raise NoRealRootError(
            f"no real linearisation root for pair {quad.pair} at s={s}")
    sqrt_disc = np.sqrt(disc)
    alpha = min((-coef_b - sqrt_disc) / (2.0 * coef_a),
                (-coef_b + sqrt_disc) / (2.0 * coef_a))
    b = float(np.dot(s2, g)) - alpha * float(np.dot(s2, g ** 2))
    return a_vec, float(b)


def boundary_tangent_row(quad: PairConstraintQuadratic, s) -> tuple[np.ndarray, float]:
    """Fallback row: tangent at the radial projection of s onto the boundary.

    Used when the linearisation quadratic has no real root (s far inside
    the feasible side of a near-degenerate constraint); the tangent at
    s* = s * sqrt(gamma / s^T Gamma s) keeps the supporting-half-plane
    semantics and is satisfied at s.
    """
    s = np.asarray(s, dtype=float).reshape(2)
    g = np.diag(quad.gamma_matrix)
    quad_value = float(np.dot(s * s, g))
    if quad_value <= 0.0:
        raise DegenerateLinearizationError(
            f"scale {s} is in the null space of Gamma for pair {quad.pair}")
    s_star = s * np.sqrt(quad.gamma_scalar / quad_value)
    return g * s_star, float(quad.gamma_scalar)


def assemble_constraints(s, beliefs, base: BaseConfiguration, radii,
                         epsilon: float, xi: float, self_index: int
                         ) -> ScaleConstraintSet:
    """One linearised row per other robot, stacked.

    ``beliefs`` and ``radii`` are index-aligned over all robots.  Rows keep
    ascending neighbour order so downstream tie-breaking is deterministic.
    """
    s = np.asarray(s, dtype=float).reshape(2)
    n = base.n_robots
    if len(beliefs) != n or len(radii) != n:
        raise ValueError("beliefs and radii must cover every robot")
    rows_a, rows_b, pairs = [], [], []
    c_i = base.point(self_index)
    cov_i = beliefs[self_index].covariance
    for j in range(n):
        if j == self_index:
            continue
        quad = pair_quadratic(
            c_i, base.point(j), radii[self_index], radii[j], epsilon, xi,
            cov_i + beliefs[j].covariance, pair=(self_index, j))
        try:
            a_vec, b = linearize(quad, s)
        except NoRealRootError:
            a_vec, b = boundary_tangent_row(quad, s)
        rows_a.append(a_vec)
        rows_b.append(b)
        pairs.append(quad.pair)
    if not rows_a:
        return ScaleConstraintSet(np.zeros((0, 2)), np.zeros(0), s, pairs)
    return ScaleConstraintSet(np.array(rows_a), np.array(rows_b), s, pairs)


def mc_collision_probability(belief_i: PositionBelief, belief_j: PositionBelief,
                             r_i: float, r_j: float, epsilon: float,
                             samples: int = 100_000, rng_seed: int = 0) -> float:
    """Monte-Carlo estimate of the pair collision probability.

    Samples the relative-position distribution and counts draws inside the
    collision ball of radius r_i + r_j + epsilon.  Deterministic for a fixed
    seed; this is the verification oracle for the hyperplane upper bound.
    """
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples for a usable estimate")
    delta_mean = belief_j.mean - belief_i.mean
    sigma = belief_i.covariance + belief_j.covariance
    rng = np.random.default_rng(rng_seed)
    draws = rng.multivariate_normal(delta_mean, sigma, size=int(samples))
    radius = r_i + r_j + epsilon
    return float(np.mean(np.linalg.norm(draws, axis=1) <= radius))


def hyperplane_probability(belief_i: PositionBelief, belief_j: PositionBelief,
                           r_i: float, r_j: float, epsilon: float) -> float:
    """Upper bound on the collision probability via the half-plane containing the ball.

    Projects the relative-position Gaussian onto the mean-distance direction
    and integrates the resulting univariate tail up to r_i + r_j + epsilon.
    """
    delta_mean = belief_j.mean - belief_i.mean
    dist = float(np.linalg.norm(delta_mean))
    if dist == 0.0:
        raise UndefinedNormalError("mean distance vector is zero")
    n = delta_mean / dist
    sigma = belief_i.covariance + belief_j.covariance
    var = float(n @ sigma @ n)
    d = r_i + r_j + epsilon
    if var <= 0.0:
        return 1.0 if dist <= d else 0.0
    return normal_cdf((d - dist) / np.sqrt(var))
