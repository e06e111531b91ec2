"""Axis-aligned box obstacles and sphere-vs-box signed distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ObstacleBox:
    """Axis-aligned box given by center and per-axis half extents (m)."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.half_extents = np.asarray(self.half_extents, dtype=float)
        if self.center.shape != (3,) or self.half_extents.shape != (3,):
            raise ValueError("center and half_extents must be 3-vectors")
        if not (np.all(np.isfinite(self.center)) and np.all(np.isfinite(self.half_extents))):
            raise ValueError("obstacle geometry must be finite")
        if np.any(self.half_extents < 0):
            raise ValueError("half_extents must be componentwise >= 0")


def signed_distance(r, radius: float, obs: ObstacleBox) -> float:
    """Signed distance between a sphere of given radius at r and the box.

    Positive outside, negative when the sphere overlaps the box; inside the
    box it is minus the minimum translation to the boundary, minus radius.
    """
    r = np.asarray(r, dtype=float)
    d = np.abs(r - obs.center) - obs.half_extents
    outside = np.maximum(d, 0.0)
    sd_box = float(np.linalg.norm(outside)) + min(float(np.max(d)), 0.0)
    return sd_box - radius


def signed_distance_gradient(r, radius: float, obs: ObstacleBox) -> np.ndarray:
    """Gradient of signed_distance with respect to r.

    Unit norm outside the box. On the boundary and inside, where the
    function is nonsmooth, returns the fixed subgradient along the axis of
    minimum penetration (lowest axis index on ties, positive sign when r
    sits exactly on the box center plane).
    """
    r = np.asarray(r, dtype=float)
    rel = r - obs.center
    d = np.abs(rel) - obs.half_extents
    outside = np.maximum(d, 0.0)
    dist = float(np.linalg.norm(outside))
    if dist > 0.0:
        return np.sign(rel) * outside / dist
    axis = int(np.argmax(d))
    grad = np.zeros(3)
    grad[axis] = 1.0 if rel[axis] >= 0.0 else -1.0
    return grad
