"""Direct-form control problems: state space, control system and coefficient fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

from .cones import ControlSystem
from .errors import DimensionMismatch


class AffineDrift:
    """theta(x) = A x + b."""

    def __init__(self, b, A=None):
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        d = self.b.shape[0]
        self.A = np.zeros((d, d)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
        if self.A.shape != (d, d):
            raise DimensionMismatch("drift matrix must be d x d")

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.A.T + self.b

    def sup_norm(self, W) -> float:
        # affine: the largest norm over a convex set is attained at a vertex
        return float(max(np.linalg.norm(self(v)) for v in W.vertices))

    def to_json(self):
        return {"b": self.b.tolist(), "A": self.A.tolist()}


class CostFunction:
    def __call__(self, x):
        raise NotImplementedError

    def sup_abs_bound(self, W) -> float:
        raise NotImplementedError


class MaxAffineCost(CostFunction):
    """g(x) = max_i (a_i . x + b_i); a single piece is an affine cost."""

    def __init__(self, slopes, intercepts):
        self.slopes = np.atleast_2d(np.asarray(slopes, dtype=float))
        self.intercepts = np.atleast_1d(np.asarray(intercepts, dtype=float))

    @classmethod
    def constant(cls, value: float, d: int):
        return cls(np.zeros((1, d)), [value])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.max(x @ self.slopes.T + self.intercepts, axis=-1)

    def sup_abs_bound(self, W) -> float:
        V = W.vertices
        upper = np.max(self(V))  # convex: max at a vertex
        lower = np.min(V @ self.slopes.T + self.intercepts)  # g >= each piece
        return float(max(abs(upper), abs(lower), 0.0))

    def to_json(self):
        if self.slopes.shape[0] == 1 and not np.any(self.slopes):
            return {"constant": float(self.intercepts[0])}
        if self.slopes.shape[0] == 1:
            return {"affine": {"a": self.slopes[0].tolist(), "b": float(self.intercepts[0])}}
        return {"max_affine": [{"a": a.tolist(), "b": float(b)} for a, b in zip(self.slopes, self.intercepts)]}


class TabulatedCost(CostFunction):
    """Piecewise-linear interpolation of tabulated values (nearest value outside the hull)."""

    def __init__(self, points, values):
        pts = np.asarray(points, dtype=float)
        self.points = pts[:, None] if pts.ndim == 1 else pts
        self.values = np.asarray(values, dtype=float)
        if self.points.shape[0] != self.values.shape[0]:
            raise DimensionMismatch("one tabulated value per point")
        self.d = self.points.shape[1]
        if self.d == 1:
            order = np.argsort(self.points[:, 0])
            self._x, self._y = self.points[order, 0], self.values[order]
        else:
            self._lin = LinearNDInterpolator(self.points, self.values)
            self._near = NearestNDInterpolator(self.points, self.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.d == 1:
            return np.interp(x[..., 0], self._x, self._y)
        flat = x.reshape(-1, self.d)
        out = self._lin(flat)
        bad = np.isnan(out)
        if np.any(bad):
            out[bad] = self._near(flat[bad])
        return out.reshape(x.shape[:-1])

    def sup_abs_bound(self, W) -> float:
        return float(np.max(np.abs(self.values)))

    def to_json(self):
        return {"table": {"points": self.points.tolist(), "values": self.values.tolist()}}


@dataclass(eq=False)
class ControlProblem:
    W: object
    system: ControlSystem
    drift: AffineDrift
    sigma: np.ndarray
    g: CostFunction

    def __post_init__(self):
        d = self.system.d
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if self.W.dim != d or self.drift.b.shape != (d,) or self.sigma.shape[0] != d:
            raise DimensionMismatch("state space, drift, sigma and G must share dimension d")

    @property
    def d(self) -> int:
        return self.system.d

    @property
    def alpha(self) -> float:
        return self.system.alpha

    @property
    def kappa(self) -> np.ndarray:
        return self.system.kappa

    @property
    def Gamma(self) -> np.ndarray:
        return self.sigma @ self.sigma.T
