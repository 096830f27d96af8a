"""Virtual rigid body geometry.

The formation is a transformed copy of a base configuration: robot i tracks

    q_i = R(phi) @ diag(s_x, s_y) @ c_i + t

where c_i is the robot's base point and (phi, s_x, s_y, t_x, t_y) are the
five parameters every robot runs consensus on.  This module holds the pure
geometry: the transform, its 2x5 Jacobian with respect to the parameters,
the right pseudo-inverse used for velocity tracking, and base-configuration
handling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Scale components must stay strictly above this floor; zero or negative
# scaling collapses the formation and breaks the pair-distance algebra.
S_MIN_DEFAULT = 1e-3

_CENTROID_TOL = 1e-9
_COND_LIMIT = 1e12


class ConfigurationInvalidError(ValueError):
    """Base configuration violates a structural requirement."""


class DegenerateJacobianError(ValueError):
    """J J^T is numerically singular.

    Unreachable for a Jacobian built by :func:`jacobian` (the translation
    block guarantees full row rank); raised only on corrupt input.
    """


@dataclass
class FormationParams:
    """Formation parameter vector (phi, s_x, s_y, t_x, t_y).

    phi rotates the formation about its centroid, scale stretches the two
    body axes, translation places the centroid in the world frame.  phi is
    an unbounded real: consensus averages parameters componentwise, so the
    angle must live on a flat line, not a circle.
    """

    phi: float
    scale: np.ndarray
    translation: np.ndarray
    s_min: float = field(default=S_MIN_DEFAULT, repr=False)

    def __post_init__(self):
        self.phi = float(self.phi)
        self.scale = np.asarray(self.scale, dtype=float).reshape(2).copy()
        self.translation = np.asarray(self.translation, dtype=float).reshape(2).copy()
        if not (np.isfinite(self.phi)
                and np.all(np.isfinite(self.scale))
                and np.all(np.isfinite(self.translation))):
            raise ValueError("formation parameters must be finite")
        if not np.all(self.scale > self.s_min):
            raise ValueError(
                f"scale components must be > s_min={self.s_min}, got {self.scale}")

    def as_vector(self) -> np.ndarray:
        """Pack as the 5-vector (phi, s_x, s_y, t_x, t_y)."""
        return np.concatenate(([self.phi], self.scale, self.translation))

    @classmethod
    def from_vector(cls, eta, s_min: float = S_MIN_DEFAULT) -> "FormationParams":
        eta = np.asarray(eta, dtype=float).reshape(5)
        return cls(eta[0], eta[1:3], eta[3:5], s_min=s_min)


@dataclass
class BaseConfiguration:
    """Per-robot base points with zero centroid.

    The zero-centroid property makes the formation rotate and scale about
    its own centre; pairwise-distinct points keep every pair's base offset
    nonzero, which the collision constraints require.
    """

    points: np.ndarray  # (N, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ConfigurationInvalidError("points must be an (N, 2) array with N >= 1")
        if not np.all(np.isfinite(pts)):
            raise ConfigurationInvalidError("base points must be finite")
        if np.max(np.abs(pts.sum(axis=0))) > _CENTROID_TOL:
            raise ConfigurationInvalidError("base points must sum to zero (recenter first)")
        _check_distinct(pts)
        self.points = pts

    @property
    def n_robots(self) -> int:
        return self.points.shape[0]

    def point(self, i: int) -> np.ndarray:
        return self.points[i]


def _check_distinct(pts: np.ndarray) -> None:
    n = pts.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if np.all(np.abs(pts[j] - pts[i]) < 1e-9):
                raise ConfigurationInvalidError(
                    f"base points {i} and {j} coincide; pair offsets would vanish")


def recenter_base(points) -> BaseConfiguration:
    """Shift points by their centroid so they sum to zero.

    Pairwise differences are preserved, so the formation shape is unchanged.
    Raises ConfigurationInvalidError if any two points coincide.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ConfigurationInvalidError("points must be an (N, 2) array with N >= 1")
    if not np.all(np.isfinite(pts)):
        raise ConfigurationInvalidError("base points must be finite")
    centered = pts - pts.mean(axis=0)
    # Kill the residual so the centroid invariant holds bit-for-bit.
    centered -= centered.mean(axis=0)
    return BaseConfiguration(centered)


def rotation(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def transform_point(eta: FormationParams, c) -> np.ndarray:
    """Map a base point through the formation transform: R(phi) diag(s) c + t."""
    c = np.asarray(c, dtype=float).reshape(2)
    return rotation(eta.phi) @ (eta.scale * c) + eta.translation


def jacobian(eta: FormationParams, c) -> np.ndarray:
    """2x5 Jacobian of transform_point with respect to (phi, s_x, s_y, t_x, t_y).

    The last two columns are the identity by construction, so the matrix
    always has full row rank.
    """
    c = np.asarray(c, dtype=float).reshape(2)
    cphi, sphi = np.cos(eta.phi), np.sin(eta.phi)
    sx, sy = eta.scale
    cx, cy = c
    return np.array([
        [-sphi * sx * cx - cphi * sy * cy, cphi * cx, -sphi * cy, 1.0, 0.0],
        [cphi * sx * cx - sphi * sy * cy, sphi * cx, cphi * cy, 0.0, 1.0],
    ])


def pseudo_inverse(J: np.ndarray) -> np.ndarray:
    """Right Moore-Penrose pseudo-inverse J^T (J J^T)^-1 of a full-row-rank 2x5 matrix."""
    J = np.asarray(J, dtype=float)
    JJt = J @ J.T
    evals = np.linalg.eigvalsh(JJt)
    if evals[0] <= 0.0 or evals[1] / evals[0] > _COND_LIMIT:
        raise DegenerateJacobianError(
            f"J J^T is numerically singular (eigenvalues {evals})")
    # solve(JJt, J) = (JJt)^-1 J, so its transpose is J^T (JJt)^-1.
    return np.linalg.solve(JJt, J).T
