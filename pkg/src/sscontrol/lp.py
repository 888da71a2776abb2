"""Dense two-phase simplex and small rank-revealing linear algebra helpers.

Problems in this package have at most a few dozen variables, so everything is
a dense numpy tableau.  Pivoting uses Dantzig's rule and falls back to Bland's
rule after a run of degenerate pivots.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, Inconsistent, NumericalBreakdown

FEAS_TOL = 1e-9
GAP_TOL = 1e-8
RANK_TOL = 1e-10
PIVOT_TOL = 1e-11
OPT_TOL = 1e-11


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """minimize ``objective @ x`` s.t. ``equality_matrix @ x = equality_rhs`` and bounds.

    Lower bounds are 0 (or any finite value) or ``-inf``; upper bounds are
    finite or ``+inf``.  Omitted bounds default to ``x >= 0``.
    """

    objective: np.ndarray
    equality_matrix: np.ndarray
    equality_rhs: np.ndarray
    variable_lower_bounds: np.ndarray | None = None
    variable_upper_bounds: np.ndarray | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.objective, dtype=float))
        n = c.shape[0]
        A = np.asarray(self.equality_matrix, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        b = np.atleast_1d(np.asarray(self.equality_rhs, dtype=float))
        if A.ndim != 2 or A.shape[1] != n:
            raise DimensionMismatch(f"equality_matrix shape {A.shape} incompatible with {n} variables")
        if b.shape != (A.shape[0],):
            raise DimensionMismatch(f"equality_rhs length {b.shape} != {A.shape[0]} rows")
        lo = np.zeros(n) if self.variable_lower_bounds is None else np.asarray(self.variable_lower_bounds, float)
        hi = np.full(n, np.inf) if self.variable_upper_bounds is None else np.asarray(self.variable_upper_bounds, float)
        if lo.shape != (n,) or hi.shape != (n,):
            raise DimensionMismatch("bound vectors must match the number of variables")
        if np.any(lo == np.inf) or np.any(hi == -np.inf) or np.any(lo > hi):
            raise DimensionMismatch("bounds must satisfy lower <= upper")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise DimensionMismatch("LP data must be finite")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "equality_matrix", A)
        object.__setattr__(self, "equality_rhs", b)
        object.__setattr__(self, "variable_lower_bounds", lo)
        object.__setattr__(self, "variable_upper_bounds", hi)

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]


@dataclass(frozen=True)
class LpOutcome:
    status: LpStatus
    value: float | None = None
    primal: np.ndarray | None = None
    # multipliers on the equality rows; reduced costs are objective - A.T @ dual
    # (plus bound multipliers for boxed variables, folded into dual_value)
    dual: np.ndarray | None = None
    dual_value: float | None = None
    ray: np.ndarray | None = None
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _standard_form(lp: LinearProgram):
    """Map x = x0 + T @ y with y >= 0; append rows y_j + s_j = width_j for boxed vars."""
    n = lp.n_vars
    lo, hi = lp.variable_lower_bounds, lp.variable_upper_bounds
    x0 = np.zeros(n)
    cols = []  # (original index, sign)
    boxed = []  # (std column, width)
    for j in range(n):
        if np.isfinite(lo[j]):
            x0[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(hi[j]):
                boxed.append((len(cols) - 1, hi[j] - lo[j]))
        elif np.isfinite(hi[j]):
            x0[j] = hi[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    N = len(cols)
    T = np.zeros((n, N))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s
    A = lp.equality_matrix @ T
    b = lp.equality_rhs - lp.equality_matrix @ x0
    c = lp.objective @ T
    n_slack = len(boxed)
    m0 = A.shape[0]
    A_std = np.zeros((m0 + n_slack, N + n_slack))
    A_std[:m0, :N] = A
    b_std = np.concatenate([b, np.array([w for _, w in boxed])])
    for r, (k, _) in enumerate(boxed):
        A_std[m0 + r, k] = 1.0
        A_std[m0 + r, N + r] = 1.0
    c_std = np.concatenate([c, np.zeros(n_slack)])
    T_full = np.hstack([T, np.zeros((n, n_slack))])
    return A_std, b_std, c_std, x0, T_full, m0


def _pivot(tab, row, col):
    tab[row] /= tab[row, col]
    piv = tab[row]
    colv = tab[:, col].copy()
    colv[row] = 0.0
    tab -= np.outer(colv, piv)


def _run_simplex(tab, basis, cost, allowed, pivot_tol, max_iter, degenerate_switch=20):
    """Minimize ``cost @ y`` over the tableau in place.

    Returns ("optimal", iters) or ("unbounded", entering column, iters).
    """
    m = tab.shape[0]
    bland = False
    degenerate_run = 0
    it = 0
    while True:
        if it >= max_iter:
            raise NumericalBreakdown(f"simplex did not terminate within {max_iter} pivots")
        cb = cost[basis] if m else np.zeros(0)
        reduced = cost - cb @ tab[:, :-1] if m else cost.copy()
        reduced = np.where(allowed, reduced, 0.0)
        scale = 1.0 + np.max(np.abs(cost))
        candidates = np.flatnonzero(reduced < -OPT_TOL * scale)
        if candidates.size == 0:
            return ("optimal", it)
        if bland:
            col = int(candidates[0])
        else:
            col = int(candidates[np.argmin(reduced[candidates])])
        column = tab[:, col]
        rows = np.flatnonzero(column > pivot_tol)
        if rows.size == 0:
            if np.any(column > 0.0) and np.max(column) > 1e3 * np.finfo(float).eps:
                if bland:
                    raise NumericalBreakdown(
                        f"only tiny pivots (max {np.max(column):.3e}) in entering column {col}"
                    )
                bland = True
                it += 1
                continue
            return ("unbounded", col, it)
        ratios = tab[rows, -1] / column[rows]
        best = np.min(ratios)
        tied = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
        if bland:
            row = int(tied[np.argmin(basis[tied])])
        else:
            row = int(tied[np.argmax(column[tied])])
        if tab[row, -1] <= 1e-12:
            degenerate_run += 1
            if degenerate_run >= degenerate_switch:
                bland = True
        else:
            degenerate_run = 0
        _pivot(tab, row, col)
        basis[row] = col
        it += 1


def solve_lp(
    lp: LinearProgram,
    feas_tol: float = FEAS_TOL,
    gap_tol: float = GAP_TOL,
    pivot_tol: float = PIVOT_TOL,
) -> LpOutcome:
    """Two-phase simplex. Unbounded outcomes carry a descent ray in ``ray``."""
    A, b, c, x0, Tmap, m_orig = _standard_form(lp)
    m, N = A.shape
    flip = b < 0
    A1 = np.where(flip[:, None], -A, A)
    b1 = np.where(flip, -b, b)
    max_iter = 50 * (m + N) + 1000

    # phase 1: artificials on every row
    tab = np.zeros((m, N + m + 1))
    tab[:, :N] = A1
    tab[:, N:N + m] = np.eye(m)
    tab[:, -1] = b1
    basis = np.arange(N, N + m)
    cost1 = np.concatenate([np.zeros(N), np.ones(m)])
    allowed = np.ones(N + m, dtype=bool)
    status = _run_simplex(tab, basis, cost1, allowed, pivot_tol, max_iter)
    iters = status[-1]
    infeas = float(np.sum(tab[basis >= N, -1])) if m else 0.0
    if infeas > feas_tol * (1.0 + (np.max(np.abs(b)) if m else 0.0)):
        return LpOutcome(LpStatus.INFEASIBLE, iterations=iters, extra={"phase1_value": infeas})

    # drive artificial variables out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= N:
            row = tab[i, :N]
            j = np.flatnonzero(np.abs(row) > pivot_tol)
            if j.size:
                col = int(j[np.argmax(np.abs(row[j]))])
                _pivot(tab, i, col)
                basis[i] = col
            else:
                keep[i] = False
    tab = np.delete(tab[keep], np.s_[N:N + m], axis=1)
    basis = basis[keep]

    status = _run_simplex(tab, basis, c, np.ones(N, dtype=bool), pivot_tol, max_iter)
    iters += status[-1]
    if status[0] == "unbounded":
        col = status[1]
        d = np.zeros(N)
        d[col] = 1.0
        d[basis] = -tab[:, col]
        ray = Tmap @ d
        nrm = np.linalg.norm(ray)
        if nrm > 0:
            ray = ray / nrm
        return LpOutcome(LpStatus.UNBOUNDED, ray=ray, iterations=iters)

    # polish the basic solution and recover duals from the basis matrix
    y = np.zeros(N)
    if basis.size:
        AB = A[:, basis]
        yb = np.linalg.lstsq(AB, b, rcond=None)[0]
        if np.min(yb) < -feas_tol or np.max(np.abs(AB @ yb - b)) > np.max(np.abs(AB @ tab[:, -1] - b)):
            yb = tab[:, -1]
        y[basis] = np.maximum(yb, 0.0)
        dual_std = np.linalg.lstsq(AB.T, c[basis], rcond=None)[0]
    else:
        dual_std = np.zeros(m)
    x = x0 + Tmap @ y
    value = float(lp.objective @ x)
    dual_value = float(lp.objective @ x0 + dual_std @ b)
    outcome = LpOutcome(
        LpStatus.OPTIMAL,
        value=value,
        primal=x,
        dual=dual_std[:m_orig],
        dual_value=dual_value,
        iterations=iters,
        extra={"bound_dual": dual_std[m_orig:], "basis": basis.copy()},
    )
    resid = np.max(np.abs(lp.equality_matrix @ x - lp.equality_rhs), initial=0.0)
    # relative feasibility: rounding in A @ x grows with |A| |x|
    bscale = (1.0 + np.max(np.abs(lp.equality_rhs), initial=0.0)
              + np.max(np.abs(lp.equality_matrix), initial=0.0) * np.max(np.abs(x), initial=0.0))
    if resid > feas_tol * bscale * 10 or abs(value - dual_value) > gap_tol * (1.0 + abs(value)):
        raise NumericalBreakdown(
            f"optimal basis fails certification (residual {resid:.2e}, gap {abs(value - dual_value):.2e})"
        )
    return outcome


def _matrix_scale(A: np.ndarray) -> float:
    return 1.0 + (np.linalg.norm(A, 2) if A.size else 0.0)


def numerical_rank(A: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > rank_tol * _matrix_scale(A)))


def nullspace_basis(A: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal columns spanning ker(A); shape (n, n - rank)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    r = int(np.sum(s > rank_tol * _matrix_scale(A)))
    return vt[r:].T.copy()


def min_norm_solve(A: np.ndarray, b: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Minimum Euclidean norm solution of a consistent system A x = b."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
    x = np.linalg.pinv(A, rcond=rank_tol) @ b
    resid = np.max(np.abs(A @ x - b), initial=0.0)
    if resid > 1e-10 * (1.0 + np.max(np.abs(b), initial=0.0)):
        raise Inconsistent(f"system is inconsistent: residual {resid:.3e}")
    return x
