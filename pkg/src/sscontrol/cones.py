"""Polyhedral control cones, the displacement cost, the Hamiltonian and the
algebraic solvability/uniqueness conditions.

A cone is stored through finitely many unit-norm generating rays (columns of
``generators``).  The displacement cost

    c(x) = inf { kappa . u : u in cone, G u = x }

is a linear program in the generator weights, and the Hamiltonian is
``H(q) = sup_{|e| = 1} (-e . q - c(e))``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DimensionTooLarge,
    EmptyCone,
    HamiltonianInfinite,
    NotControllable,
)
from .lp import LinearProgram, LpStatus, nullspace_basis, solve_lp

RAY_TOL = 1e-9
STRICT_TOL = 1e-7
ARB_TOL = 1e-9
DELTA_CAP = 1e6
DEFAULT_DIRS = 64
EPS_SWEEP = tuple(10.0 ** -k for k in range(0, 9))


@dataclass(frozen=True, eq=False)
class ControlCone:
    generators: np.ndarray  # p x J, unit columns

    def __post_init__(self):
        R = np.asarray(self.generators, dtype=float)
        if R.ndim == 1:
            R = R[:, None]
        if R.ndim != 2 or R.shape[1] < 1:
            raise DimensionMismatch("a cone needs at least one generator column")
        norms = np.linalg.norm(R, axis=0)
        if np.any(norms <= 1e-14):
            raise DimensionMismatch("generators must be nonzero")
        object.__setattr__(self, "generators", R / norms)

    @property
    def p(self) -> int:
        return self.generators.shape[0]

    @property
    def n_generators(self) -> int:
        return self.generators.shape[1]

    @classmethod
    def orthant(cls, p: int) -> "ControlCone":
        return cls(np.eye(p))

    @classmethod
    def from_rays(cls, rays) -> "ControlCone":
        """Build from a list of rays (one p-vector per ray)."""
        return cls(np.asarray(rays, dtype=float).T)


@dataclass(frozen=True, eq=False)
class ControlSystem:
    cone: ControlCone
    G: np.ndarray
    kappa: np.ndarray
    alpha: float = 1.0
    _reach: list = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        p = self.cone.p
        if G.shape[1] != p or kappa.shape != (p,):
            raise DimensionMismatch(f"G {G.shape} and kappa {kappa.shape} must match p = {p}")
        if G.shape[0] > p:
            raise DimensionMismatch("state dimension d must not exceed control dimension p")
        if not self.alpha > 0:
            raise DimensionMismatch("discount alpha must be positive")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "_cache", {})
        # f_i^{+/-}: cheapest (in total generator weight) cone element with G u = +/- e_i
        reach = []
        for i in range(self.d):
            pair = []
            for s in (1.0, -1.0):
                out = solve_lp(LinearProgram(np.ones(self.n_generators), self.GR, s * np.eye(self.d)[i]))
                pair.append(self.cone.generators @ out.primal if out.optimal else None)
            reach.append(tuple(pair))
        object.__setattr__(self, "_reach", reach)

    @property
    def d(self) -> int:
        return self.G.shape[0]

    @property
    def p(self) -> int:
        return self.cone.p

    @property
    def n_generators(self) -> int:
        return self.cone.n_generators

    @property
    def GR(self) -> np.ndarray:
        """Images G r_j of the generators (d x J)."""
        return self.G @ self.cone.generators

    @property
    def kR(self) -> np.ndarray:
        return self.kappa @ self.cone.generators

    @property
    def controllable(self) -> bool:
        return all(f is not None for pair in self._reach for f in pair)

    @property
    def c_varpi(self) -> float:
        if not self.controllable:
            raise NotControllable("G applied to the cone does not cover R^d")
        return self.d * max(max(np.linalg.norm(fp), np.linalg.norm(fm)) for fp, fm in self._reach)


def _cost_lp(sys: ControlSystem, x) -> LinearProgram:
    return LinearProgram(sys.kR, sys.GR, np.atleast_1d(np.asarray(x, dtype=float)))


def displacement_cost(sys: ControlSystem, x) -> float:
    """Cheapest control cost of an instantaneous displacement x (may be +/-inf)."""
    out = solve_lp(_cost_lp(sys, x))
    if out.status is LpStatus.INFEASIBLE:
        return np.inf
    if out.status is LpStatus.UNBOUNDED:
        return -np.inf
    return out.value


def displacement_argmin(sys: ControlSystem, x) -> np.ndarray:
    """A cone element u with G u = x attaining the displacement cost."""
    out = solve_lp(_cost_lp(sys, x))
    if out.status is LpStatus.UNBOUNDED:
        raise HamiltonianInfinite("displacement cost is -inf", ray=sys.cone.generators @ out.ray)
    if out.status is LpStatus.INFEASIBLE:
        raise NotControllable(f"displacement {x} is not reachable")
    return sys.cone.generators @ out.primal


def unit_directions(d: int, n_dirs: int = DEFAULT_DIRS) -> np.ndarray:
    """Direction set (rows): {+1, -1} for d = 1, equispaced angles for d = 2."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if n_dirs < 2:
        raise ValueError("n_dirs must be at least 2")
    if d == 2:
        th = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
        return np.column_stack([np.cos(th), np.sin(th)])
    # d >= 3 is outside the tested range; a fixed pseudo-random spherical design
    z = np.random.default_rng(12345).standard_normal((n_dirs, d))
    z = np.vstack([np.eye(d), -np.eye(d), z])
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def direction_costs(sys: ControlSystem, n_dirs: int = DEFAULT_DIRS):
    """(directions, c(e) per direction), cached on the system."""
    key = ("dirs", sys.d, n_dirs if sys.d > 1 else 2)
    if key not in sys._cache:
        E = unit_directions(sys.d, n_dirs)
        costs = np.array([displacement_cost(sys, e) for e in E])
        sys._cache[key] = (E, costs)
    return sys._cache[key]


def hamiltonian(sys: ControlSystem, q, n_dirs: int = DEFAULT_DIRS):
    """H(q) = max_e (-e . q - c(e)) over the direction set.

    Exact for d = 1.  ``q`` may be a single d-vector or an array (..., d);
    for d = 1 a scalar or 1-D array of scalars is accepted.
    """
    E, costs = direction_costs(sys, n_dirs)
    if np.any(costs == -np.inf):
        j = int(np.flatnonzero(costs == -np.inf)[0])
        out = solve_lp(_cost_lp(sys, E[j]))
        ray = sys.cone.generators @ out.ray if out.ray is not None else None
        raise HamiltonianInfinite(f"c(e) = -inf in direction {E[j]}", ray=ray)
    q = np.asarray(q, dtype=float)
    scalar_1d = sys.d == 1 and (q.ndim == 0 or q.shape[-1] != 1)
    if scalar_1d:
        q = q[..., None]
    finite = np.isfinite(costs)
    if not np.any(finite):
        vals = np.full(q.shape[:-1], -np.inf)
    else:
        vals = np.max(-(q @ E[finite].T) - costs[finite], axis=-1)
    return float(vals) if np.ndim(vals) == 0 else vals


@dataclass
class ConditionReport:
    controllable: bool
    hamiltonian_finite: bool
    strict_subsolution_exists: bool
    no_arbitrage: bool
    weak_no_arbitrage: bool
    u1_condition: bool
    witness_q: np.ndarray | None = None
    witness_delta: float | None = None
    arbitrage_direction: np.ndarray | None = None
    u1_vector: np.ndarray | None = None
    weak_no_arbitrage_sweep: bool | None = None
    sweep: list = field(default_factory=list)

    @property
    def solvable(self) -> bool:
        return self.controllable and self.hamiltonian_finite

    @property
    def unique(self) -> bool:
        return self.solvable and self.strict_subsolution_exists

    def to_json(self) -> dict:
        def arr(v):
            return None if v is None else np.asarray(v, dtype=float).tolist()

        return {
            "controllable": self.controllable,
            "hamiltonian_finite": self.hamiltonian_finite,
            "strict_subsolution_exists": self.strict_subsolution_exists,
            "no_arbitrage": self.no_arbitrage,
            "weak_no_arbitrage": self.weak_no_arbitrage,
            "weak_no_arbitrage_sweep": self.weak_no_arbitrage_sweep,
            "u1_condition": self.u1_condition,
            "witness_q": arr(self.witness_q),
            "witness_delta": self.witness_delta,
            "arbitrage_direction": arr(self.arbitrage_direction),
            "u1_vector": arr(self.u1_vector),
            "eps_sweep": [{"eps": e, "empty": ok} for e, ok in self.sweep],
            "solvable": self.solvable,
            "unique": self.unique,
        }


def _subsolution_lp(sys: ControlSystem, ray_tol: float):
    """max delta s.t. kappa.r_j + q.(G r_j) >= delta |G r_j| for moving generators.

    Returns (feasible, q, delta).  Feasible is False iff some generator with
    G r_j = 0 has kappa.r_j < 0.
    """
    d = sys.d
    GR, kR = sys.GR, sys.kR
    norms = np.linalg.norm(GR, axis=0)
    moving = norms > ray_tol
    if np.any(kR[~moving] < -ARB_TOL):
        return False, None, None
    idx = np.flatnonzero(moving)
    k = idx.size
    # variables: q (d, free), delta (free, <= cap), slacks (k, >= 0)
    c = np.zeros(d + 1 + k)
    c[d] = -1.0
    A = np.zeros((k, d + 1 + k))
    for row, j in enumerate(idx):
        A[row, :d] = GR[:, j]
        A[row, d] = -norms[j]
        A[row, d + 1 + row] = -1.0
    b = -kR[idx]
    lo = np.concatenate([np.full(d + 1, -np.inf), np.zeros(k)])
    hi = np.concatenate([np.full(d, np.inf), [DELTA_CAP], np.full(k, np.inf)])
    out = solve_lp(LinearProgram(c, A, b, lo, hi))
    if not out.optimal:
        return False, None, None
    return True, out.primal[:d], float(out.primal[d])


def _arbitrage_search(sys: ControlSystem, ray_tol: float):
    """Return a nonzero u in the cone with G u = 0 and kappa.u <= 0, or None."""
    J = sys.n_generators
    R, GR, kR = sys.cone.generators, sys.GR, sys.kR
    A = np.vstack([GR, np.ones((1, J))])
    b = np.concatenate([np.zeros(sys.d), [1.0]])
    out = solve_lp(LinearProgram(kR, A, b))
    if not out.optimal or out.value > ARB_TOL:
        return None
    u = R @ out.primal
    if np.linalg.norm(u) > ray_tol:
        return u
    # the cone contains a line (generators cancel); search coordinate-wise for
    # a genuinely nonzero element of {G u = 0, kappa.u <= 0}
    for i in range(sys.p):
        for s in (1.0, -1.0):
            # variables lambda (J), slack t for kappa.u + t = 0, slack w for s*u_i - w = 1
            A = np.zeros((sys.d + 2, J + 2))
            A[: sys.d, :J] = GR
            A[sys.d, :J] = kR
            A[sys.d, J] = 1.0
            A[sys.d + 1, :J] = s * R[i]
            A[sys.d + 1, J + 1] = -1.0
            b = np.concatenate([np.zeros(sys.d), [0.0, 1.0]])
            out = solve_lp(LinearProgram(np.zeros(J + 2), A, b))
            if out.optimal:
                return R @ out.primal[:J]
    return None


def weak_no_arbitrage_empty(sys: ControlSystem, eps: float) -> bool:
    """Is {u in cone : |G u|_inf <= eps, kappa.u <= -1} empty?"""
    J, d = sys.n_generators, sys.d
    GR, kR = sys.GR, sys.kR
    # variables lambda (J), t (1) for kappa.u + t = -1, s+ (d), s- (d)
    n = J + 1 + 2 * d
    A = np.zeros((1 + 2 * d, n))
    A[0, :J] = kR
    A[0, J] = 1.0
    A[1:1 + d, :J] = GR
    A[1:1 + d, J + 1:J + 1 + d] = np.eye(d)
    A[1 + d:, :J] = -GR
    A[1 + d:, J + 1 + d:] = np.eye(d)
    b = np.concatenate([[-1.0], np.full(2 * d, eps)])
    out = solve_lp(LinearProgram(np.zeros(n), A, b))
    return out.status is LpStatus.INFEASIBLE


def _u1_lp(sys: ControlSystem):
    """max delta s.t. u1.r_j >= delta for all generators, -1 <= u1 <= 1."""
    p, J = sys.p, sys.n_generators
    R = sys.cone.generators
    # u1 = w - 1 with w in [0, 2]; variables w (p), delta (free), slacks (J)
    n = p + 1 + J
    c = np.zeros(n)
    c[p] = -1.0
    A = np.zeros((J, n))
    A[:, :p] = R.T
    A[:, p] = -1.0
    A[:, p + 1:] = -np.eye(J)
    b = R.sum(axis=0)
    lo = np.concatenate([np.zeros(p), [-np.inf], np.zeros(J)])
    hi = np.concatenate([np.full(p, 2.0), [np.inf], np.full(J, np.inf)])
    out = solve_lp(LinearProgram(c, A, b, lo, hi))
    u1 = out.primal[:p] - 1.0
    return float(out.primal[p]), u1 / max(np.linalg.norm(u1), 1e-300)


def check_conditions(
    sys: ControlSystem,
    ray_tol: float = RAY_TOL,
    strict_tol: float = STRICT_TOL,
    eps_grid=EPS_SWEEP,
) -> ConditionReport:
    controllable = sys.controllable
    feasible, q, delta = _subsolution_lp(sys, ray_tol)
    finite = feasible and delta >= -strict_tol
    strict = feasible and delta > strict_tol
    arb = _arbitrage_search(sys, ray_tol)
    sweep = [(float(e), weak_no_arbitrage_empty(sys, e)) for e in eps_grid]
    delta_u1, u1 = _u1_lp(sys)
    return ConditionReport(
        controllable=controllable,
        hamiltonian_finite=finite,
        strict_subsolution_exists=strict,
        no_arbitrage=arb is None,
        weak_no_arbitrage=finite,
        u1_condition=delta_u1 > strict_tol,
        witness_q=q if feasible else None,
        witness_delta=delta if feasible else None,
        arbitrage_direction=None if arb is None else arb / np.linalg.norm(arb),
        u1_vector=u1 if delta_u1 > strict_tol else None,
        weak_no_arbitrage_sweep=sweep[-1][1],
        sweep=sweep,
    )


def varpi(sys: ControlSystem, x) -> np.ndarray:
    """Linear-growth selection u = varpi(x) in the cone with G u = x.

    Accepts one d-vector or a stack of them with shape (..., d).
    """
    if not sys.controllable:
        raise NotControllable("G applied to the cone does not cover R^d")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    Fp = np.array([fp for fp, _ in sys._reach])
    Fm = np.array([fm for _, fm in sys._reach])
    ax = np.abs(x)
    return np.where(x > 0, ax, 0.0) @ Fp + np.where(x > 0, 0.0, ax) @ Fm


def cone_contains(cone: ControlCone, u, tol: float = 1e-9) -> bool:
    u = np.asarray(u, dtype=float)
    if np.linalg.norm(u) <= tol:
        return True
    out = solve_lp(LinearProgram(np.zeros(cone.n_generators), cone.generators, u), feas_tol=tol)
    return out.optimal


def cone_from_subspace_intersection(K_matrix, rank_tol: float = 1e-10) -> ControlCone:
    """Extreme rays of range(K) intersected with the nonnegative orthant.

    Enumerates candidate supports; a support S gives an extreme ray when the
    subspace restricted to coordinates S is one-dimensional and spanned by a
    strictly positive vector.
    """
    K = np.atleast_2d(np.asarray(K_matrix, dtype=float))
    p = K.shape[0]
    if p > 14:
        raise DimensionTooLarge(f"p = {p} exceeds the enumeration bound 14")
    N = nullspace_basis(K.T, rank_tol).T  # rows span range(K)^perp
    k = p - N.shape[0]
    if k == 0:
        raise EmptyCone("range(K) is {0}")
    rays = []
    for size in range(1, p - k + 2):
        for S in itertools.combinations(range(p), size):
            if N.shape[0] == 0:
                ker = np.eye(size)
            else:
                ker = nullspace_basis(N[:, S], rank_tol)
            if ker.shape[1] != 1:
                continue
            v = ker[:, 0]
            if np.all(v < 0):
                v = -v
            if np.all(v > 1e-12):
                ray = np.zeros(p)
                ray[list(S)] = v
                rays.append(ray)
    if not rays:
        raise EmptyCone("range(K) meets the nonnegative orthant only at 0")
    return ControlCone(np.array(rays).T)
