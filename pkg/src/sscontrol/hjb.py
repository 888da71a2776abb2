"""Monotone lattice scheme for ((L + alpha) psi - g) v H(D psi) = 0 with state constraints.

At every node the fixed-point map takes the smaller of

* the value isolated from the upwind / 7-point discretization of
  ``alpha psi + L psi - g = 0`` (available only where the whole stencil lies
  in the domain), and
* the jump candidates ``psi(x + h e) + h c(e)`` over unit directions e whose
  foot point (and interpolation support) stays inside the domain.

Restricting jumps to inward foot points is how the state-constraint boundary
condition enters: boundary nodes only see the domain from inside.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .cones import DEFAULT_DIRS, direction_costs
from .errors import (
    CrossTermDominanceViolated,
    EmptyInterior,
    HamiltonianInfinite,
    NoAdmissibleDirection,
    NotConverged,
)
from .problem import ControlProblem

INSIDE_TOL = 1e-12
WEIGHT_TOL = 1e-14


@dataclass(eq=False)
class GridProblem:
    W: object
    h: float
    origin: np.ndarray
    lattice: np.ndarray  # (N, d) integer coordinates
    nodes: np.ndarray  # (N, d)
    boundary: np.ndarray  # (N,) bool
    drift: np.ndarray  # (N, d)
    Gamma: np.ndarray  # (N, d, d)
    g: np.ndarray  # (N,)
    alpha: float
    directions: np.ndarray  # (n_dirs, d)
    dir_costs: np.ndarray  # (n_dirs,)
    # compiled stencils (CSR layout)
    pde_ok: np.ndarray
    pde_diag: np.ndarray
    pde_ptr: np.ndarray
    pde_nb: np.ndarray
    pde_w: np.ndarray
    node_cand_ptr: np.ndarray
    cand_dir: np.ndarray
    cand_cost: np.ndarray
    cand_self: np.ndarray
    cand_ptr: np.ndarray
    cand_nb: np.ndarray
    cand_w: np.ndarray
    index: dict = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    def admitted_directions(self, node: int) -> np.ndarray:
        lo, hi = self.node_cand_ptr[node], self.node_cand_ptr[node + 1]
        return self.directions[self.cand_dir[lo:hi]]

    def node_at(self, x) -> int | None:
        key = tuple(np.rint((np.asarray(x, dtype=float) - self.origin) / self.h).astype(int))
        return self.index.get(key)


def _pde_stencil(h, alpha, drift, Gamma):
    """Return (diag, {lattice offset: weight}); all weights nonnegative."""
    d = drift.shape[0]
    w = {}

    def add(off, val):
        if val > 0.0:
            w[off] = w.get(off, 0.0) + val

    h2 = h * h
    cross = Gamma[0, 1] if d == 2 else 0.0
    for i in range(d):
        e = [0] * d
        e[i] = 1
        plus, minus = tuple(e), tuple(-k for k in e)
        base = (Gamma[i, i] - abs(cross)) / (2.0 * h2)
        if base < -1e-15:
            raise CrossTermDominanceViolated(f"|Gamma_12| = {abs(cross)} exceeds Gamma_{i + 1}{i + 1} = {Gamma[i, i]}")
        add(plus, base)
        add(minus, base)
        if drift[i] > 0:
            add(plus, drift[i] / h)
        elif drift[i] < 0:
            add(minus, -drift[i] / h)
    if d == 2 and cross != 0.0:
        c = abs(cross) / (2.0 * h2)
        if cross > 0:
            add((1, 1), c)
            add((-1, -1), c)
        else:
            add((-1, 1), c)
            add((1, -1), c)
    diag = alpha + sum(w.values())
    return diag, w


def _interp_offsets(e):
    """Multilinear weights of the point x + h e relative to the node x (lattice units)."""
    items = [((), 1.0)]
    for comp in e:
        a = abs(comp)
        step = 1 if comp >= 0 else -1
        nxt = []
        for off, wt in items:
            if 1.0 - a > WEIGHT_TOL:
                nxt.append((off + (0,), wt * (1.0 - a)))
            if a > WEIGHT_TOL:
                nxt.append((off + (step,), wt * a))
        items = nxt
    return items


def build_grid(problem: ControlProblem, h_grid: float, n_dirs: int = DEFAULT_DIRS) -> GridProblem:
    if not h_grid > 0:
        raise ValueError("grid spacing must be positive")
    W = problem.W
    d = problem.d
    lo, hi = W.bounding_box
    counts = np.floor((hi - lo) / h_grid + 1e-9).astype(int) + 1
    axes = [lo[i] + h_grid * np.arange(counts[i]) for i in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    lat = np.stack(np.meshgrid(*[np.arange(c) for c in counts], indexing="ij"), axis=-1).reshape(-1, d)
    inside = np.array([W.contains(x, INSIDE_TOL) for x in mesh])
    nodes, lattice = mesh[inside], lat[inside]
    if nodes.shape[0] == 0:
        raise EmptyInterior("no lattice node lies in the state space")
    index = {tuple(k): i for i, k in enumerate(lattice)}
    N = nodes.shape[0]

    unit = np.eye(d, dtype=int)
    boundary = np.array([
        any(tuple(k + s * unit[i]) not in index for i in range(d) for s in (1, -1)) for k in lattice
    ])
    if np.all(boundary):
        raise EmptyInterior(f"grid spacing {h_grid} leaves no interior node")

    drift = problem.drift(nodes)
    Gam = np.broadcast_to(problem.Gamma, (N, d, d)).copy()
    g = np.asarray(problem.g(nodes), dtype=float)
    alpha = problem.alpha
    E, costs = direction_costs(problem.system, n_dirs)
    if np.any(costs == -np.inf):
        raise HamiltonianInfinite("some direction has displacement cost -inf")

    pde_ok = np.zeros(N, dtype=np.bool_)
    pde_diag = np.empty(N)
    pde_ptr, pde_nb, pde_w = [0], [], []
    node_cand_ptr, cand_dir, cand_cost, cand_self = [0], [], [], []
    cand_ptr, cand_nb, cand_w = [0], [], []
    dir_offsets = [_interp_offsets(e) for e in E]

    for n, (x, k) in enumerate(zip(nodes, lattice)):
        diag, stencil = _pde_stencil(h_grid, alpha, drift[n], Gam[n])
        pde_diag[n] = diag
        nbs = [(index.get(tuple(k + np.array(off))), wt) for off, wt in stencil.items()]
        if all(j is not None for j, _ in nbs):
            pde_ok[n] = True
            for j, wt in nbs:
                pde_nb.append(j)
                pde_w.append(wt)
        pde_ptr.append(len(pde_nb))

        for t, (e, offs) in enumerate(zip(E, dir_offsets)):
            if not np.isfinite(costs[t]) or not W.contains(x + h_grid * e, INSIDE_TOL):
                continue
            corners = [(index.get(tuple(k + np.array(off))), wt, not any(off)) for off, wt in offs]
            if any(j is None for j, _, _ in corners):
                continue
            self_w = sum(wt for _, wt, is_self in corners if is_self)
            cand_dir.append(t)
            cand_cost.append(h_grid * costs[t])
            cand_self.append(self_w)
            for j, wt, is_self in corners:
                if not is_self:
                    cand_nb.append(j)
                    cand_w.append(wt)
            cand_ptr.append(len(cand_nb))
        node_cand_ptr.append(len(cand_dir))
        if not pde_ok[n] and node_cand_ptr[-1] == node_cand_ptr[-2]:
            raise NoAdmissibleDirection(f"node {x} has neither a PDE stencil nor an inward jump")

    if pde_w and min(pde_w) < 0 or cand_w and min(cand_w) < 0:
        raise AssertionError("stencil has a negative off-diagonal weight (scheme not monotone)")

    return GridProblem(
        W=W, h=float(h_grid), origin=lo.astype(float), lattice=lattice, nodes=nodes,
        boundary=boundary, drift=drift, Gamma=Gam, g=g, alpha=alpha,
        directions=E, dir_costs=costs,
        pde_ok=pde_ok, pde_diag=pde_diag,
        pde_ptr=np.array(pde_ptr, dtype=np.int64), pde_nb=np.array(pde_nb, dtype=np.int64),
        pde_w=np.array(pde_w, dtype=float),
        node_cand_ptr=np.array(node_cand_ptr, dtype=np.int64), cand_dir=np.array(cand_dir, dtype=np.int64),
        cand_cost=np.array(cand_cost, dtype=float), cand_self=np.array(cand_self, dtype=float),
        cand_ptr=np.array(cand_ptr, dtype=np.int64), cand_nb=np.array(cand_nb, dtype=np.int64),
        cand_w=np.array(cand_w, dtype=float), index=index,
    )


@njit(cache=True)
def _sweep(psi, order, pde_ok, pde_diag, g, pde_ptr, pde_nb, pde_w,
           node_cand_ptr, cand_cost, cand_self, cand_ptr, cand_nb, cand_w):
    change = 0.0
    for node in order:
        best = np.inf
        if pde_ok[node]:
            s = g[node]
            for k in range(pde_ptr[node], pde_ptr[node + 1]):
                s += pde_w[k] * psi[pde_nb[k]]
            best = s / pde_diag[node]
        for c in range(node_cand_ptr[node], node_cand_ptr[node + 1]):
            s = cand_cost[c]
            for k in range(cand_ptr[c], cand_ptr[c + 1]):
                s += cand_w[k] * psi[cand_nb[k]]
            # psi(x) = w_self psi(x) + s  solved for psi(x)
            v = s / (1.0 - cand_self[c])
            if v < best:
                best = v
        diff = abs(best - psi[node])
        if diff > change or diff != diff:
            change = diff
        psi[node] = best
    return change


def _run_sweep(gp: GridProblem, psi: np.ndarray, forward: bool) -> float:
    order = np.arange(gp.n_nodes, dtype=np.int64)
    if not forward:
        order = order[::-1].copy()
    return _sweep(psi, order, gp.pde_ok, gp.pde_diag, gp.g, gp.pde_ptr, gp.pde_nb, gp.pde_w,
                  gp.node_cand_ptr, gp.cand_cost, gp.cand_self, gp.cand_ptr, gp.cand_nb, gp.cand_w)


def sweep_once(gp: GridProblem, psi, forward: bool = True) -> np.ndarray:
    """One Gauss-Seidel pass of the fixed-point map on a copy of ``psi``."""
    out = np.array(psi, dtype=float, copy=True)
    _run_sweep(gp, out, forward)
    return out


@dataclass
class ResidualField:
    pde: np.ndarray  # NaN where the PDE stencil does not fit
    jump: np.ndarray  # -inf where no direction is admitted
    value: np.ndarray
    branch: np.ndarray  # "pde" or "jump"

    @property
    def inf_norm(self) -> float:
        return float(np.max(np.abs(self.value)))

    def valid(self, resid_tol: float) -> bool:
        """Both branches <= tol and one of them active, at every node."""
        pde = np.where(np.isnan(self.pde), -np.inf, self.pde)
        return bool(np.all(pde <= resid_tol) and np.all(self.jump <= resid_tol)
                    and np.all(np.maximum(pde, self.jump) >= -resid_tol))


def residual(gp: GridProblem, psi) -> ResidualField:
    """Discrete residual max{(L_h + alpha) psi - g, H_h(psi)} per node (equation units)."""
    psi = np.asarray(getattr(psi, "values", psi), dtype=float)
    N = gp.n_nodes
    pde = np.full(N, np.nan)
    jump = np.full(N, -np.inf)
    for n in range(N):
        if gp.pde_ok[n]:
            lo, hi = gp.pde_ptr[n], gp.pde_ptr[n + 1]
            pde[n] = gp.pde_diag[n] * psi[n] - gp.pde_w[lo:hi] @ psi[gp.pde_nb[lo:hi]] - gp.g[n]
        for c in range(gp.node_cand_ptr[n], gp.node_cand_ptr[n + 1]):
            lo, hi = gp.cand_ptr[c], gp.cand_ptr[c + 1]
            foot = gp.cand_self[c] * psi[n] + gp.cand_w[lo:hi] @ psi[gp.cand_nb[lo:hi]]
            val = (psi[n] - foot - gp.cand_cost[c]) / gp.h
            if val > jump[n]:
                jump[n] = val
    pde_cmp = np.where(np.isnan(pde), -np.inf, pde)
    value = np.maximum(pde_cmp, jump)
    branch = np.where(pde_cmp >= jump, "pde", "jump")
    return ResidualField(pde, jump, value, branch)


@dataclass
class ValueField:
    values: np.ndarray
    residual_inf: float
    iterations: int
    converged: bool
    resid_tol: float = 0.0
    residual: ResidualField | None = field(default=None, repr=False)


def residual_tolerance(gp: GridProblem, tol: float) -> float:
    """Equation-unit tolerance matching a value-unit update tolerance ``tol``."""
    scale = max(float(np.max(gp.pde_diag[gp.pde_ok], initial=gp.alpha)), 1.0 / gp.h)
    return 10.0 * tol * scale


def default_max_iter(gp: GridProblem) -> int:
    """Sweep budget: creep across the grid, or the PDE contraction rate alpha / diag."""
    creep = 10 * (gp.n_nodes + math.ceil(1.0 / gp.h))
    diag = float(np.max(gp.pde_diag[gp.pde_ok], initial=gp.alpha))
    return int(max(creep, math.ceil(40.0 * diag / gp.alpha)))


def solve(gp: GridProblem, init=0.0, tol: float = 1e-9, max_iter: int | None = None) -> ValueField:
    """Alternating Gauss-Seidel sweeps until the sup-norm update drops below ``tol``.

    A non-converged run returns the last iterate with ``converged = False``.
    """
    if max_iter is None:
        max_iter = default_max_iter(gp)
    init = getattr(init, "values", init)
    psi = np.array(np.broadcast_to(np.asarray(init, dtype=float), (gp.n_nodes,)), copy=True)
    change = np.inf
    it = 0
    while it < max_iter:
        change = _run_sweep(gp, psi, forward=(it % 2 == 0))
        it += 1
        if change < tol:
            break
    res = residual(gp, psi)
    rtol = residual_tolerance(gp, tol)
    ok = bool(change < tol and res.valid(rtol))
    return ValueField(psi, res.inf_norm, it, ok, rtol, res)


@dataclass
class ProbeReport:
    inits: list
    fields: list
    sup_differences: np.ndarray  # pairwise
    max_difference: float
    flag: str  # "Unique" or "MultipleFixedPoints"


def uniqueness_probe(gp: GridProblem, offsets=(), tol: float = 1e-9, max_iter: int | None = None) -> ProbeReport:
    inits = [0.0] + [-abs(float(c)) for c in offsets]
    fields = []
    for c in inits:
        vf = solve(gp, c, tol, max_iter)
        if not vf.converged:
            raise NotConverged(f"solve from init {c} did not converge", field=vf)
        fields.append(vf)
    k = len(fields)
    diffs = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            diffs[i, j] = np.max(np.abs(fields[i].values - fields[j].values))
    mx = float(diffs.max())
    return ProbeReport(inits, fields, diffs, mx, "MultipleFixedPoints" if mx > 10 * tol else "Unique")


def interpolate(gp: GridProblem, psi, x) -> float:
    """Multilinear interpolation of a node field at x; nearest node if a corner is missing."""
    psi = np.asarray(getattr(psi, "values", psi), dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    f = (x - gp.origin) / gp.h
    base = np.floor(f + 1e-12).astype(int)
    t = np.clip(f - base, 0.0, 1.0)
    total = 0.0
    for corner in np.ndindex(*([2] * gp.d)):
        wt = float(np.prod([t[i] if c else 1.0 - t[i] for i, c in enumerate(corner)]))
        if wt <= WEIGHT_TOL:
            continue
        j = gp.index.get(tuple(base + np.array(corner)))
        if j is None:
            near = int(np.argmin(np.linalg.norm(gp.nodes - x, axis=1)))
            return float(psi[near])
        total += wt * psi[j]
    return total


def local_lipschitz(gp: GridProblem, psi, x) -> float:
    """Largest axis difference quotient of the field around the node nearest x."""
    psi = np.asarray(getattr(psi, "values", psi), dtype=float)
    near = int(np.argmin(np.linalg.norm(gp.nodes - np.atleast_1d(x), axis=1)))
    k = gp.lattice[near]
    best = 0.0
    for i in range(gp.d):
        for s in (1, -1):
            off = np.zeros(gp.d, dtype=int)
            off[i] = s
            j = gp.index.get(tuple(k + off))
            if j is not None:
                best = max(best, abs(psi[j] - psi[near]) / gp.h)
    return best


def write_field_csv(path, gp: GridProblem, field_: ValueField) -> None:
    res = field_.residual if field_.residual is not None else residual(gp, field_.values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(gp.d)] + ["psi", "residual", "active_branch"])
        for n in range(gp.n_nodes):
            w.writerow([f"{v:.17g}" for v in gp.nodes[n]]
                       + [f"{field_.values[n]:.17g}", f"{res.value[n]:.17g}", res.branch[n]])
