"""Euler simulation of admissible singular controls and discounted cost estimates.

Controls are piecewise constant between grid times (all action happens in
jumps at grid times), so the control part of the cost and both sides of the
integration-by-parts identity are evaluated in closed form.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .cones import check_conditions, displacement_argmin, varpi
from .errors import InadmissiblePolicy, MixedGrids, StateEscaped
from .geometry import Interval, ball_project
from .hjb import interpolate, local_lipschitz
from .problem import ControlProblem

POLICY_KINDS = ("DoNothing", "ReflectBall", "ProjectToW", "ImmediateJumpThenIdle")
STATE_TOL = 1e-9


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    center: tuple | None = None
    radius: float | None = None
    target: tuple | None = None
    optimal: bool = False  # ProjectToW: use the cheapest cone element instead of varpi
    then_project: bool = False  # ImmediateJumpThenIdle: keep projecting after the jump

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise InadmissiblePolicy(f"unknown policy kind {self.kind!r}")
        if self.kind == "ReflectBall" and (self.center is None or not (self.radius or 0) > 0):
            raise InadmissiblePolicy("ReflectBall needs a center and a positive radius")
        if self.kind == "ImmediateJumpThenIdle" and self.target is None:
            raise InadmissiblePolicy("ImmediateJumpThenIdle needs a target")

    def validate(self, problem: ControlProblem) -> None:
        W = problem.W
        if self.kind == "ReflectBall":
            c = np.atleast_1d(np.asarray(self.center, dtype=float))
            if isinstance(W, Interval):
                inside = W.lo <= c[0] - self.radius and c[0] + self.radius <= W.hi
            else:
                dist = (W.offsets - W.normals @ c) / np.linalg.norm(W.normals, axis=1)
                inside = bool(np.all(dist >= self.radius))
            if not inside:
                raise InadmissiblePolicy("ReflectBall: closed ball is not contained in the state space")
        if self.kind == "ImmediateJumpThenIdle":
            tgt = np.atleast_1d(np.asarray(self.target, dtype=float))
            if not W.contains(tgt, STATE_TOL):
                raise InadmissiblePolicy("ImmediateJumpThenIdle: target outside the state space")
            still = np.allclose(problem.drift(tgt), 0.0) and np.allclose(problem.sigma, 0.0)
            if not (still or self.then_project):
                raise InadmissiblePolicy(
                    "ImmediateJumpThenIdle: dynamics do not vanish at the target; compose with projection"
                )

    def to_json(self):
        out = {"kind": self.kind}
        if self.center is not None:
            out["center"] = list(np.atleast_1d(self.center).astype(float))
            out["radius"] = float(self.radius)
        if self.target is not None:
            out["target"] = list(np.atleast_1d(self.target).astype(float))
        if self.optimal:
            out["optimal"] = True
        if self.then_project:
            out["then_project"] = True
        return out

    @classmethod
    def from_json(cls, obj):
        def tup(v):
            return None if v is None else tuple(np.atleast_1d(v).astype(float))

        return cls(obj["kind"], tup(obj.get("center")), obj.get("radius"), tup(obj.get("target")),
                   bool(obj.get("optimal", False)), bool(obj.get("then_project", False)))


@dataclass
class PathSample:
    times: np.ndarray  # (K+1,)
    W: np.ndarray  # (K+1, d), state after the control action at each grid time
    U: np.ndarray  # (K+1, p), cumulative control, constant on [t_k, t_{k+1})
    dU: np.ndarray  # (K+1, p), dU[0] is the jump at time zero
    dZ: np.ndarray  # (K, k)
    w0: np.ndarray
    seed: tuple


@dataclass
class CostEstimate:
    mean: float
    std_error: float
    n_paths: int
    horizon_T: float
    tail_bound: float
    per_path: np.ndarray | None = None

    def to_json(self):
        return {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths,
                "horizon_T": self.horizon_T, "tail_bound": self.tail_bound}


def _path_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _control_for(problem: ControlProblem, xi: np.ndarray, optimal: bool) -> np.ndarray:
    """Cone elements with G u = xi row by row (varpi, or the cheapest element)."""
    if not optimal:
        return varpi(problem.system, xi)
    out = np.zeros((xi.shape[0], problem.system.p))
    for r in np.flatnonzero(np.any(xi != 0.0, axis=1)):
        out[r] = displacement_argmin(problem.system, xi[r])
    return out


def simulate(problem: ControlProblem, policy: PolicySpec, w0, n_paths: int = 1, dt: float = 1e-3,
             T: float | None = None, seed: int = 0) -> list[PathSample]:
    if T is None:
        T = 20.0 / problem.alpha
    if not dt > 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    policy.validate(problem)
    W = problem.W
    d, p = problem.d, problem.system.p
    G, sigma = problem.system.G, problem.sigma
    k_noise = sigma.shape[1]
    w0 = np.atleast_1d(np.asarray(w0, dtype=float))
    if not W.contains(w0, STATE_TOL):
        raise InadmissiblePolicy(f"initial state {w0} is outside the state space")
    K = int(round(T / dt))
    times = dt * np.arange(K + 1)
    noisy = bool(np.any(sigma != 0.0))
    dZ = np.zeros((n_paths, K, k_noise))
    if noisy:
        for i in range(n_paths):
            dZ[i] = math.sqrt(dt) * _path_rng(seed, i).standard_normal((K, k_noise))

    Wp = np.zeros((n_paths, K + 1, d))
    dU = np.zeros((n_paths, K + 1, p))
    X = np.broadcast_to(w0, (n_paths, d)).copy()

    def act(X, step):
        if policy.kind == "DoNothing" or (policy.kind == "ImmediateJumpThenIdle" and step > 0
                                          and not policy.then_project):
            if not np.all(W.contains_many(X, STATE_TOL)):
                raise StateEscaped(f"state left the domain at t = {times[step]:.6g} with no control")
            return np.zeros((n_paths, p))
        if policy.kind == "ImmediateJumpThenIdle" and step == 0:
            xi = np.atleast_1d(np.asarray(policy.target, dtype=float)) - X
            return _control_for(problem, xi, False)
        if policy.kind == "ReflectBall":
            xi = ball_project(X, policy.center, policy.radius) - X
        else:
            xi = W.project_many(X) - X
        return _control_for(problem, xi, policy.optimal)

    dU[:, 0] = act(X, 0)
    Wp[:, 0] = X + dU[:, 0] @ G.T
    for step in range(K):
        cur = Wp[:, step]
        X = cur + problem.drift(cur) * dt + dZ[:, step] @ sigma.T
        dU[:, step + 1] = act(X, step + 1)
        Wp[:, step + 1] = X + dU[:, step + 1] @ G.T

    U = np.cumsum(dU, axis=1)
    return [PathSample(times, Wp[i], U[i], dU[i], dZ[i], w0, (int(seed), i)) for i in range(n_paths)]


def _check_grid(paths):
    t0 = paths[0].times
    for pth in paths[1:]:
        if pth.times.shape != t0.shape or not np.array_equal(pth.times, t0):
            raise MixedGrids("paths do not share a time grid")
    return t0


def path_costs(paths, kappa, g, alpha) -> np.ndarray:
    """Discounted cost on [0, T] per path.

    g is held at its left-endpoint value on each step; the control term
    alpha * int e^{-alpha s} kappa.U_s ds is exact for piecewise-constant U.
    """
    t = _check_grid(paths)
    disc = np.exp(-alpha * t[:-1]) - np.exp(-alpha * t[1:])
    out = np.empty(len(paths))
    for i, pth in enumerate(paths):
        gv = np.asarray(g(pth.W[:-1]), dtype=float)
        kU = pth.U[:-1] @ kappa
        out[i] = gv @ disc / alpha + kU @ disc
    return out


def estimate_cost(paths, kappa, g, alpha, g_bound: float | None = None) -> CostEstimate:
    """Monte Carlo estimate of the cost with a truncation bound for the tail beyond T.

    The tail bound assumes |U| keeps growing at most linearly at the sample's
    observed rate; ``g_bound`` defaults to the largest |g| seen along the paths.
    """
    kappa = np.asarray(kappa, dtype=float)
    costs = path_costs(paths, kappa, g, alpha)
    T = float(paths[0].times[-1])
    if g_bound is None:
        g_bound = max(float(np.max(np.abs(g(pth.W)))) for pth in paths)
    u_end = max(float(np.linalg.norm(pth.U[-1])) for pth in paths)
    c_lin = np.linalg.norm(kappa) * u_end * (1.0 + 1.0 / (alpha * T)) / (1.0 + T)
    tail = math.exp(-alpha * T) * (g_bound / alpha + c_lin * (1.0 + T))
    n = len(paths)
    se = float(np.std(costs, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return CostEstimate(float(np.mean(costs)), se, n, T, tail, costs)


def check_integration_by_parts(path: PathSample, kappa, alpha: float, t: float | None = None) -> float:
    """|alpha int_0^t e^{-as} k.U ds + e^{-at} k.U_t - sum_{t_k <= t} e^{-a t_k} k.dU_k|."""
    times = path.times
    j = len(times) - 1 if t is None else int(np.flatnonzero(np.isclose(times, t, rtol=0, atol=1e-12))[0])
    tj = times[j]
    kU = path.U @ kappa
    disc = np.exp(-alpha * times[:j]) - np.exp(-alpha * times[1:j + 1])
    lhs = kU[:j] @ disc + math.exp(-alpha * tj) * kU[j]
    rhs = np.exp(-alpha * times[: j + 1]) @ (path.dU[: j + 1] @ kappa)
    return float(abs(lhs - rhs))


def negative_part_integral(paths, kappa, alpha) -> float:
    """Sample mean of int_0^T e^{-alpha s} (kappa.U_s)^- ds."""
    t = _check_grid(paths)
    w = (np.exp(-alpha * t[:-1]) - np.exp(-alpha * t[1:])) / alpha
    return float(np.mean([np.maximum(-(pth.U[:-1] @ kappa), 0.0) @ w for pth in paths]))


def negative_part_bound(problem: ControlProblem) -> float:
    """Bound on E int e^{-alpha s} (kappa.U_s)^- ds for any admissible control.

    Uses (kappa.u)^- <= c1 |G u| with c1 from the subsolution witness and
    E|G U_t| <= diam W + |theta| t + |sigma|_F sqrt(t).
    """
    rep = check_conditions(problem.system)
    if not rep.hamiltonian_finite:
        return math.inf
    c1 = max(float(np.linalg.norm(rep.witness_q)) - rep.witness_delta, 0.0)
    a = problem.alpha
    theta = problem.drift.sup_norm(problem.W)
    sig = float(np.linalg.norm(problem.sigma))
    return c1 * (problem.W.diameter / a + theta / a ** 2 + sig * math.gamma(1.5) / a ** 1.5)


def compare_with_value(estimate: CostEstimate, gp, value_field, w0) -> dict:
    """Every admissible policy's cost bounds V from above: check it against psi(w0)."""
    psi = interpolate(gp, value_field, w0)
    slack = local_lipschitz(gp, value_field, w0) * gp.h
    upper = estimate.mean + 3.0 * estimate.std_error + estimate.tail_bound
    return {
        "psi_w0": psi,
        "estimate": estimate.mean,
        "upper": upper,
        "grid_slack": slack,
        "gap": estimate.mean - psi,
        "pass": bool(upper >= psi - slack),
    }


def write_paths_csv(path, paths) -> None:
    d, p = paths[0].W.shape[1], paths[0].U.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "t"] + [f"W{i + 1}" for i in range(d)] + [f"U{i + 1}" for i in range(p)])
        for idx, pth in enumerate(paths):
            for k in range(len(pth.times)):
                w.writerow([idx, f"{pth.times[k]:.17g}"] + [f"{v:.17g}" for v in pth.W[k]]
                           + [f"{v:.17g}" for v in pth.U[k]])
