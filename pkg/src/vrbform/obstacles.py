"""Planar obstacle set: filled circles and wall segments."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ObstacleMap:
    circles: list[tuple[np.ndarray, float]] = field(default_factory=list)
    segments: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        self.circles = [(np.asarray(c, dtype=float).reshape(2), float(r))
                        for c, r in self.circles]
        self.segments = [(np.asarray(p, dtype=float).reshape(2),
                          np.asarray(q, dtype=float).reshape(2))
                         for p, q in self.segments]
        for c, r in self.circles:
            if not np.all(np.isfinite(c)) or not np.isfinite(r) or r <= 0.0:
                raise ValueError(f"bad circle obstacle ({c}, {r})")
        for p, q in self.segments:
            if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
                raise ValueError("segment endpoints must be finite")

    @property
    def is_empty(self) -> bool:
        return not self.circles and not self.segments

    def distance_and_gradient(self, p) -> tuple[float, np.ndarray]:
        """Distance from p to the nearest obstacle and its gradient at p.

        The gradient is the unit vector from the nearest obstacle point
        toward p (the direction in which the distance grows fastest).
        Distance is signed for circles (negative inside); segments give
        zero distance on contact with an arbitrary-but-fixed perpendicular
        gradient so callers still get a usable push direction.
        """
        p = np.asarray(p, dtype=float).reshape(2)
        best: tuple[float, np.ndarray] | None = None
        for center, radius in self.circles:
            offset = p - center
            norm = float(np.linalg.norm(offset))
            dist = norm - radius
            grad = offset / norm if norm > 0.0 else np.array([1.0, 0.0])
            if best is None or dist < best[0]:
                best = (dist, grad)
        for start, end in self.segments:
            dist, grad = _point_segment(p, start, end)
            if best is None or dist < best[0]:
                best = (dist, grad)
        if best is None:
            raise ValueError("obstacle map is empty")
        return best


def _point_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray
                   ) -> tuple[float, np.ndarray]:
    ab = b - a
    denom = float(ab @ ab)
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0)) if denom > 0.0 else 0.0
    nearest = a + t * ab
    offset = p - nearest
    dist = float(np.linalg.norm(offset))
    if dist > 0.0:
        return dist, offset / dist
    # On the segment: pick the left-hand perpendicular as a stable direction.
    if denom > 0.0:
        perp = np.array([-ab[1], ab[0]]) / np.sqrt(denom)
    else:
        perp = np.array([1.0, 0.0])
    return 0.0, perp
