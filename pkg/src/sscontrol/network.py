"""Reduction of a generalized Brownian network to workload (singular control) form."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cones import ControlSystem, cone_from_subspace_intersection
from .errors import (
    DegenerateWorkload,
    DimensionMismatch,
    DimensionUnsupported,
    EmptyCone,
    Inconsistent,
    OutsideWorkloadSpace,
)
from .geometry import Interval, Polygon
from .lp import LinearProgram, LpStatus, min_norm_solve, nullspace_basis, solve_lp


@dataclass(frozen=True)
class PiecewiseAffine:
    """Convex function ``max_i (slopes[i] . z + intercepts[i])``."""

    slopes: np.ndarray  # (pieces, m)
    intercepts: np.ndarray  # (pieces,)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.slopes, dtype=float))
        b = np.atleast_1d(np.asarray(self.intercepts, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise DimensionMismatch("one intercept per affine piece")
        object.__setattr__(self, "slopes", a)
        object.__setattr__(self, "intercepts", b)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.max(z @ self.slopes.T + self.intercepts, axis=-1)


@dataclass(frozen=True, eq=False)
class BrownianNetwork:
    theta: np.ndarray
    Sigma: np.ndarray
    R: np.ndarray
    K: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray
    h: PiecewiseAffine
    v: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("theta", "Sigma", "R", "K", "z_lo", "z_hi", "v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "R", np.atleast_2d(self.R))
        object.__setattr__(self, "K", np.atleast_2d(self.K))
        m, n = self.R.shape
        if self.K.shape[1] != n or self.v.shape != (n,):
            raise DimensionMismatch("K must have n columns and v length n")
        if self.theta.shape != (m,) or self.Sigma.shape != (m, m):
            raise DimensionMismatch("theta and Sigma must match m")
        if self.z_lo.shape != (m,) or self.z_hi.shape != (m,) or np.any(self.z_hi <= self.z_lo):
            raise DimensionMismatch("state box must satisfy lo < hi componentwise")
        if not np.allclose(self.Sigma, self.Sigma.T) or np.linalg.eigvalsh(self.Sigma).min() <= 0:
            raise DimensionMismatch("Sigma must be symmetric positive definite")
        if self.h.slopes.shape[1] != m:
            raise DimensionMismatch("holding cost pieces must have m slopes")
        if not self.alpha > 0:
            raise DimensionMismatch("alpha must be positive")

    @property
    def m(self):
        return self.R.shape[0]

    @property
    def n(self):
        return self.R.shape[1]

    @property
    def p(self):
        return self.K.shape[0]

    def box_vertices(self) -> np.ndarray:
        return np.array([np.where(bits, self.z_hi, self.z_lo)
                         for bits in itertools.product([False, True], repeat=self.m)])


@dataclass(eq=False)
class WorkloadModel:
    M: np.ndarray
    G: np.ndarray
    pi: np.ndarray
    kappa: np.ndarray
    W_space: object
    theta_reduced: np.ndarray
    Gamma_reduced: np.ndarray
    sigma_reduced: np.ndarray
    system: ControlSystem | None = None
    certificates: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.M.shape[0]


def compute_workload_basis(net: BrownianNetwork, rank_tol: float = 1e-10):
    """Orthonormal rows spanning {a : R' a in range(K')}; returns (M, d)."""
    Zk = nullspace_basis(net.K, rank_tol)  # ker K
    if Zk.shape[1] == 0:
        M = np.eye(net.m)
    else:
        M = nullspace_basis((net.R @ Zk).T, rank_tol).T
    d = M.shape[0]
    if d == 0:
        raise DegenerateWorkload("workload space is {0}")
    return M, d


def reduce(net: BrownianNetwork, with_cone: bool = True) -> WorkloadModel:
    M, d = compute_workload_basis(net)
    if d > 2:
        raise DimensionUnsupported(f"workload dimension d = {d}; only d in {{1, 2}} is supported")
    MR = M @ net.R
    # rowwise min-norm solve of K' G' = R' M'
    Gt = np.column_stack([min_norm_solve(net.K.T, MR[i]) for i in range(d)])
    G = Gt.T
    stacked = np.hstack([net.R.T, net.K.T])
    sol = min_norm_solve(stacked, net.v)
    pi, kappa = sol[: net.m], sol[net.m:]

    proj = net.box_vertices() @ M.T
    if d == 1:
        W = Interval(float(proj.min()), float(proj.max()))
    else:
        W = Polygon(proj)
    Gamma = M @ net.Sigma @ M.T
    evals, evecs = np.linalg.eigh(Gamma)
    sigma = evecs @ np.diag(np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T

    system = None
    if with_cone:
        try:
            cone = cone_from_subspace_intersection(net.K)
        except EmptyCone:
            cone = None  # range(K) meets the orthant only at 0: no controls at all
        if cone is not None:
            system = ControlSystem(cone, G, kappa, net.alpha)
    cert = {
        "MR_minus_GK": float(np.max(np.abs(MR - G @ net.K))),
        "MR_scale": float(np.max(np.abs(MR))),
        "v_residual": float(np.max(np.abs(net.v - net.R.T @ pi - net.K.T @ kappa))),
        "v_scale": float(np.max(np.abs(net.v))),
        "sigma_residual": float(np.max(np.abs(sigma @ sigma.T - Gamma))),
    }
    if cert["MR_minus_GK"] > 1e-10 * (1 + cert["MR_scale"]):
        raise Inconsistent(f"M R = G K residual {cert['MR_minus_GK']:.3e}")
    return WorkloadModel(M, G, pi, kappa, W, M @ net.theta, Gamma, sigma, system, cert)


def effective_cost(model: WorkloadModel, net: BrownianNetwork, w, member_tol: float = 1e-9):
    """g(w) = min { h(z) + alpha pi.z : M z = w, z in box } and a minimizing z."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if not model.W_space.contains(w, member_tol):
        raise OutsideWorkloadSpace(f"w = {w} lies outside the workload space")
    m, d = net.m, model.d
    a, b = net.h.slopes, net.h.intercepts
    k = a.shape[0]
    lo, hi = net.z_lo, net.z_hi
    # variables y = z - lo in [0, hi - lo], t free, s (k) >= 0 with t - a_i.z - s_i = b_i
    n = m + 1 + k
    c = np.zeros(n)
    c[:m] = net.alpha * model.pi
    c[m] = 1.0
    A = np.zeros((k + d, n))
    A[:k, :m] = -a
    A[:k, m] = 1.0
    A[:k, m + 1:] = -np.eye(k)
    rhs = np.concatenate([b + a @ lo, w - model.M @ lo])
    A[k:, :m] = model.M
    lower = np.concatenate([np.zeros(m), [-np.inf], np.zeros(k)])
    upper = np.concatenate([hi - lo, [np.inf], np.full(k, np.inf)])
    out = solve_lp(LinearProgram(c, A, rhs, lower, upper))
    if out.status is LpStatus.INFEASIBLE:
        raise OutsideWorkloadSpace(f"no box state z has M z = {w}")
    z = lo + out.primal[:m]
    return float(out.value + net.alpha * model.pi @ lo), z


def network_controllable(net: BrownianNetwork) -> bool:
    """{R y : K y >= 0} = R^m, checked by reaching +/- e_i."""
    m, n, p = net.m, net.n, net.p
    for i in range(m):
        for s in (1.0, -1.0):
            # variables y free (n), slack (p) with K y - slack = 0
            A = np.zeros((m + p, n + p))
            A[:m, :n] = net.R
            A[m:, :n] = net.K
            A[m:, n:] = -np.eye(p)
            rhs = np.concatenate([s * np.eye(m)[i], np.zeros(p)])
            lo = np.concatenate([np.full(n, -np.inf), np.zeros(p)])
            if not solve_lp(LinearProgram(np.zeros(n + p), A, rhs, lo)).optimal:
                return False
    return True


def network_no_arbitrage(net: BrownianNetwork) -> bool:
    """{y : K y >= 0, R y = 0, v.y <= 0} = {0}, checked coordinatewise."""
    m, n, p = net.m, net.n, net.p
    for i in range(n):
        for s in (1.0, -1.0):
            # variables y (n, free), ks (p) >= 0, t >= 0 with v.y + t = 0, w >= 0 with s y_i - w = 1
            A = np.zeros((m + p + 2, n + p + 2))
            A[:m, :n] = net.R
            A[m:m + p, :n] = net.K
            A[m:m + p, n:n + p] = -np.eye(p)
            A[m + p, :n] = net.v
            A[m + p, n + p] = 1.0
            A[m + p + 1, i] = s
            A[m + p + 1, n + p + 1] = -1.0
            rhs = np.concatenate([np.zeros(m + p + 1), [1.0]])
            lo = np.concatenate([np.full(n, -np.inf), np.zeros(p + 2)])
            if solve_lp(LinearProgram(np.zeros(n + p + 2), A, rhs, lo)).optimal:
                return False
    return True
