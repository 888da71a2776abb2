"""Convex state spaces: closed intervals (d = 1) and convex polygons (d = 2)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .errors import EmptyInterior


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise EmptyInterior(f"interval [{self.lo}, {self.hi}] has empty interior")

    dim = 1

    @property
    def bounding_box(self):
        return np.array([self.lo]), np.array([self.hi])

    @property
    def vertices(self) -> np.ndarray:
        return np.array([[self.lo], [self.hi]])

    @property
    def diameter(self) -> float:
        return self.hi - self.lo

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = float(np.asarray(x).reshape(-1)[0])
        return self.lo - tol <= x <= self.hi + tol

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float).reshape(1), self.lo, self.hi)

    def contains_many(self, X, tol: float = 1e-12) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return (X[:, 0] >= self.lo - tol) & (X[:, 0] <= self.hi + tol)

    def project_many(self, X) -> np.ndarray:
        return np.clip(np.asarray(X, dtype=float), self.lo, self.hi)

    def to_json(self):
        return {"interval": [self.lo, self.hi]}


class Polygon:
    """Convex polygon stored as counter-clockwise vertices and half-planes ``A x <= b``."""

    dim = 2

    def __init__(self, vertices):
        pts = np.asarray(vertices, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise EmptyInterior("a polygon needs at least three planar vertices")
        try:
            hull = ConvexHull(pts)
        except Exception as exc:  # qhull raises on degenerate input
            raise EmptyInterior(f"polygon has empty interior: {exc}") from None
        if hull.volume <= 1e-14:
            raise EmptyInterior("polygon has zero area")
        self.vertices = pts[hull.vertices]  # qhull orders 2-D hulls counter-clockwise
        eq = hull.equations  # n.x + off <= 0 inside
        self.normals = eq[:, :2]
        self.offsets = -eq[:, 2]

    @property
    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float).reshape(2)
        return bool(np.all(self.normals @ x <= self.offsets + tol))

    def project(self, x) -> np.ndarray:
        """Euclidean projection: the point itself, or the nearest point on an edge."""
        x = np.asarray(x, dtype=float).reshape(2)
        if self.contains(x, 0.0):
            return x.copy()
        best, best_d = None, np.inf
        v = self.vertices
        for a, b in zip(v, np.roll(v, -1, axis=0)):
            ab = b - a
            t = np.clip((x - a) @ ab / (ab @ ab), 0.0, 1.0)
            p = a + t * ab
            d = np.linalg.norm(x - p)
            if d < best_d:
                best, best_d = p, d
        return best

    def contains_many(self, X, tol: float = 1e-12) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.all(X @ self.normals.T <= self.offsets + tol, axis=1)

    def project_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = X.copy()
        bad = ~self.contains_many(X, 0.0)
        if not np.any(bad):
            return out
        Y = X[bad]
        v = self.vertices
        best = np.full(Y.shape[0], np.inf)
        proj = np.empty_like(Y)
        for a, b in zip(v, np.roll(v, -1, axis=0)):
            ab = b - a
            t = np.clip((Y - a) @ ab / (ab @ ab), 0.0, 1.0)
            P = a + t[:, None] * ab
            dist = np.linalg.norm(Y - P, axis=1)
            closer = dist < best
            best[closer] = dist[closer]
            proj[closer] = P[closer]
        out[bad] = proj
        return out

    def to_json(self):
        return {"polygon": self.vertices.tolist()}

    def __repr__(self):
        return f"Polygon({self.vertices.tolist()})"


def ball_project(x, center, radius) -> np.ndarray:
    """Project a point, or rows of a (n, d) array, onto a closed ball."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(center, dtype=float)
    r = np.linalg.norm(x - c, axis=-1, keepdims=True)
    scale = np.where(r > radius, radius / np.maximum(r, 1e-300), 1.0)
    return c + (x - c) * scale


def domain_from_json(obj):
    if "interval" in obj:
        lo, hi = obj["interval"]
        return Interval(float(lo), float(hi))
    if "polygon" in obj:
        return Polygon(obj["polygon"])
    raise KeyError("state space must be given as 'interval' or 'polygon'")
