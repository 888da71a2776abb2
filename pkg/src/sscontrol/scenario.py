"""Scenario files: parsing with field-path diagnostics and deterministic JSON output.

A scenario holds exactly one of

* ``direct``: ``W``, ``cone``, ``G``, ``kappa``, ``alpha``, ``drift``, ``sigma``, ``g``
* ``network``: ``theta``, ``Sigma``, ``R``, ``K``, ``v``, ``Z_box``, ``h``, ``alpha``
  (optionally ``m``, ``n``, ``p`` as a dimension cross-check)

plus optional ``solver`` and ``sim`` blocks.  See README.md for the full schema.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cones import DEFAULT_DIRS, ControlCone, ControlSystem
from .errors import ScenarioError, SSControlError
from .geometry import Interval, Polygon, domain_from_json
from .network import BrownianNetwork, PiecewiseAffine, WorkloadModel, effective_cost, reduce
from .problem import AffineDrift, ControlProblem, MaxAffineCost, TabulatedCost
from .simulate import PolicySpec

SCHEMA_VERSION = 1


@dataclass
class SolverOptions:
    h_grid: float = 0.01
    n_dirs: int = DEFAULT_DIRS
    tol: float = 1e-9
    max_iter: int | None = None
    probe_offsets: list = field(default_factory=list)

    def to_json(self):
        out = {"h_grid": self.h_grid, "n_dirs": self.n_dirs, "tol": self.tol}
        if self.max_iter is not None:
            out["max_iter"] = self.max_iter
        if self.probe_offsets:
            out["probe_offsets"] = list(self.probe_offsets)
        return out


@dataclass
class SimOptions:
    dt: float = 1e-3
    T: float | None = None
    n_paths: int = 100
    seed: int = 0
    w0: list | None = None
    policy: dict = field(default_factory=lambda: {"kind": "DoNothing"})

    def to_json(self):
        out = {"dt": self.dt, "n_paths": self.n_paths, "seed": self.seed, "policy": self.policy}
        if self.T is not None:
            out["T"] = self.T
        if self.w0 is not None:
            out["w0"] = list(self.w0)
        return out


@dataclass(eq=False)
class Scenario:
    name: str
    problem: ControlProblem | None
    network: BrownianNetwork | None
    solver: SolverOptions
    sim: SimOptions
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def is_network(self) -> bool:
        return self.network is not None


# ---------------------------------------------------------------- field readers


def _get(obj, key, where, default=...):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    if key not in obj:
        if default is ...:
            raise ScenarioError(f"{where}.{key}: required field missing")
        return default
    return obj[key]


def _number(val, where, positive=False, integer=False):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {type(val).__name__}")
    if integer and int(val) != val:
        raise ScenarioError(f"{where}: expected an integer")
    if not math.isfinite(val):
        raise ScenarioError(f"{where}: must be finite")
    if positive and not val > 0:
        raise ScenarioError(f"{where}: must be positive")
    return int(val) if integer else float(val)


def _array(val, where, ndim):
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected a numeric {'matrix' if ndim == 2 else 'vector'}") from None
    if ndim == 1 and arr.ndim == 0:
        arr = arr[None]
    if arr.ndim != ndim:
        raise ScenarioError(f"{where}: expected {ndim} dimension(s), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{where}: entries must be finite")
    return arr


def _shape(arr, shape, where):
    if arr.shape != shape:
        raise ScenarioError(f"{where}: expected shape {shape}, got {arr.shape}")


def _parse_domain(obj, where, d):
    try:
        W = domain_from_json(obj)
    except KeyError as exc:
        raise ScenarioError(f"{where}: {exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None
    if W.dim != d:
        raise ScenarioError(f"{where}: state space has dimension {W.dim}, G has {d} rows")
    return W


def _parse_cone(obj, where, p):
    if obj == "orthant" or obj is None:
        return ControlCone.orthant(p)
    rays = _array(_get(obj, "rays", where), f"{where}.rays", 2)
    if rays.shape[1] != p:
        raise ScenarioError(f"{where}.rays: each ray needs p = {p} entries")
    try:
        return ControlCone.from_rays(rays)
    except SSControlError as exc:
        raise ScenarioError(f"{where}.rays: {exc}") from None


def _parse_drift(obj, where, d):
    if "constant" in obj:
        b = _array(obj["constant"], f"{where}.constant", 1)
        _shape(b, (d,), f"{where}.constant")
        return AffineDrift(b)
    b = _array(_get(obj, "b", where), f"{where}.b", 1)
    _shape(b, (d,), f"{where}.b")
    A = None
    if "A" in obj:
        A = _array(obj["A"], f"{where}.A", 2)
        _shape(A, (d, d), f"{where}.A")
    return AffineDrift(b, A)


def _parse_cost(obj, where, d):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    if "constant" in obj:
        return MaxAffineCost.constant(_number(obj["constant"], f"{where}.constant"), d)
    if "affine" in obj:
        a = _array(_get(obj["affine"], "a", f"{where}.affine"), f"{where}.affine.a", 1)
        _shape(a, (d,), f"{where}.affine.a")
        b = _number(_get(obj["affine"], "b", f"{where}.affine", 0.0), f"{where}.affine.b")
        return MaxAffineCost(a[None, :], [b])
    if "max_affine" in obj:
        pieces = obj["max_affine"]
        if not isinstance(pieces, list) or not pieces:
            raise ScenarioError(f"{where}.max_affine: expected a nonempty list of pieces")
        slopes, icpt = [], []
        for i, pc in enumerate(pieces):
            a = _array(_get(pc, "a", f"{where}.max_affine[{i}]"), f"{where}.max_affine[{i}].a", 1)
            _shape(a, (d,), f"{where}.max_affine[{i}].a")
            slopes.append(a)
            icpt.append(_number(_get(pc, "b", f"{where}.max_affine[{i}]", 0.0), f"{where}.max_affine[{i}].b"))
        return MaxAffineCost(np.array(slopes), icpt)
    if "table" in obj:
        tab = obj["table"]
        pts = _array(_get(tab, "points", f"{where}.table"), f"{where}.table.points", 2)
        vals = _array(_get(tab, "values", f"{where}.table"), f"{where}.table.values", 1)
        if pts.shape[1] != d or pts.shape[0] != vals.shape[0]:
            raise ScenarioError(f"{where}.table: need one value per d-dimensional point")
        return TabulatedCost(pts, vals)
    raise ScenarioError(f"{where}: expected one of constant, affine, max_affine, table")


def _parse_direct(obj, where="direct"):
    G = _array(_get(obj, "G", where), f"{where}.G", 2)
    d, p = G.shape
    kappa = _array(_get(obj, "kappa", where), f"{where}.kappa", 1)
    _shape(kappa, (p,), f"{where}.kappa")
    alpha = _number(_get(obj, "alpha", where, 1.0), f"{where}.alpha", positive=True)
    W = _parse_domain(_get(obj, "W", where), f"{where}.W", d)
    cone = _parse_cone(_get(obj, "cone", where, "orthant"), f"{where}.cone", p)
    drift = _parse_drift(_get(obj, "drift", where, {"constant": [0.0] * d}), f"{where}.drift", d)
    sigma = _array(_get(obj, "sigma", where, [[0.0] * d for _ in range(d)]), f"{where}.sigma", 2)
    if sigma.shape[0] != d:
        raise ScenarioError(f"{where}.sigma: expected {d} rows, got {sigma.shape[0]}")
    g = _parse_cost(_get(obj, "g", where, {"constant": 0.0}), f"{where}.g", d)
    try:
        system = ControlSystem(cone, G, kappa, alpha)
        return ControlProblem(W, system, drift, sigma, g)
    except SSControlError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _parse_network(obj, where="network"):
    R = _array(_get(obj, "R", where), f"{where}.R", 2)
    m, n = R.shape
    K = _array(_get(obj, "K", where), f"{where}.K", 2)
    p = K.shape[0]
    for key, val in (("m", m), ("n", n), ("p", p)):
        if key in obj and _number(obj[key], f"{where}.{key}", integer=True) != val:
            raise ScenarioError(f"{where}.{key}: declared {obj[key]} but the matrices imply {val}")
    if K.shape[1] != n:
        raise ScenarioError(f"{where}.K: expected {n} columns, got {K.shape[1]}")
    theta = _array(_get(obj, "theta", where), f"{where}.theta", 1)
    _shape(theta, (m,), f"{where}.theta")
    Sigma = _array(_get(obj, "Sigma", where), f"{where}.Sigma", 2)
    _shape(Sigma, (m, m), f"{where}.Sigma")
    v = _array(_get(obj, "v", where), f"{where}.v", 1)
    _shape(v, (n,), f"{where}.v")
    box = _get(obj, "Z_box", where)
    lo = _array(_get(box, "lo", f"{where}.Z_box"), f"{where}.Z_box.lo", 1)
    hi = _array(_get(box, "hi", f"{where}.Z_box"), f"{where}.Z_box.hi", 1)
    _shape(lo, (m,), f"{where}.Z_box.lo")
    _shape(hi, (m,), f"{where}.Z_box.hi")
    hobj = _get(obj, "h", where)
    slopes = _array(_get(hobj, "slopes", f"{where}.h"), f"{where}.h.slopes", 2)
    icpt = _array(_get(hobj, "intercepts", f"{where}.h"), f"{where}.h.intercepts", 1)
    if slopes.shape[1] != m or slopes.shape[0] != icpt.shape[0]:
        raise ScenarioError(f"{where}.h: need one intercept per piece and m = {m} slopes per piece")
    alpha = _number(_get(obj, "alpha", where, 1.0), f"{where}.alpha", positive=True)
    try:
        return BrownianNetwork(theta, Sigma, R, K, lo, hi, PiecewiseAffine(slopes, icpt), v, alpha)
    except SSControlError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _parse_solver(obj):
    out = SolverOptions()
    if obj is None:
        return out
    if "h_grid" in obj:
        out.h_grid = _number(obj["h_grid"], "solver.h_grid", positive=True)
    if "n_dirs" in obj:
        out.n_dirs = _number(obj["n_dirs"], "solver.n_dirs", positive=True, integer=True)
    if "tol" in obj:
        out.tol = _number(obj["tol"], "solver.tol", positive=True)
    if obj.get("max_iter") is not None:
        out.max_iter = _number(obj["max_iter"], "solver.max_iter", positive=True, integer=True)
    if "probe_offsets" in obj:
        out.probe_offsets = [_number(c, f"solver.probe_offsets[{i}]") for i, c in enumerate(obj["probe_offsets"])]
    return out


def _parse_sim(obj, d):
    out = SimOptions()
    if obj is None:
        return out
    if "dt" in obj:
        out.dt = _number(obj["dt"], "sim.dt", positive=True)
    if obj.get("T") is not None:
        out.T = _number(obj["T"], "sim.T", positive=True)
    if "n_paths" in obj:
        out.n_paths = _number(obj["n_paths"], "sim.n_paths", positive=True, integer=True)
    if "seed" in obj:
        out.seed = _number(obj["seed"], "sim.seed", integer=True)
    if obj.get("w0") is not None:
        w0 = _array(obj["w0"], "sim.w0", 1)
        if d is not None:
            _shape(w0, (d,), "sim.w0")
        out.w0 = w0.tolist()
    if "policy" in obj:
        out.policy = obj["policy"]
        parse_policy(out.policy, "sim.policy")
    return out


def parse_policy(obj, where="policy") -> PolicySpec:
    if isinstance(obj, str):
        obj = {"kind": obj}
    try:
        return PolicySpec.from_json(obj)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"{where}: malformed policy ({exc})") from None
    except SSControlError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def parse_scenario(obj, name: str = "scenario") -> Scenario:
    if not isinstance(obj, dict):
        raise ScenarioError("top level: expected an object")
    has_direct, has_net = "direct" in obj, "network" in obj
    if has_direct == has_net:
        raise ScenarioError("top level: exactly one of 'direct' and 'network' must be present")
    problem = _parse_direct(obj["direct"]) if has_direct else None
    network = _parse_network(obj["network"]) if has_net else None
    d = problem.d if problem is not None else None
    return Scenario(str(obj.get("name", name)), problem, network, _parse_solver(obj.get("solver")),
                    _parse_sim(obj.get("sim"), d), obj)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return parse_scenario(obj, path.stem)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- reduction to direct form


def cost_table_nodes(W, h_grid: float) -> np.ndarray:
    """Lattice points of the bounding box of W that lie in W (the solver's node set)."""
    lo, hi = W.bounding_box
    counts = np.floor((hi - lo) / h_grid + 1e-9).astype(int) + 1
    axes = [lo[i] + h_grid * np.arange(counts[i]) for i in range(W.dim)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, W.dim)
    keep = W.contains_many(mesh, 1e-12)
    pts = mesh[keep]
    # polygon vertices make the tabulation cover W entirely
    return np.vstack([pts, W.vertices]) if isinstance(W, Polygon) else pts


def reduced_direct(model: WorkloadModel, net: BrownianNetwork, h_grid: float) -> dict:
    """Direct-form scenario block for a reduced network, g tabulated by effective_cost."""
    if model.system is None:
        raise ScenarioError("network: no nonzero control direction (range(K) meets the orthant only at 0)")
    pts = cost_table_nodes(model.W_space, h_grid)
    vals = [effective_cost(model, net, w)[0] for w in pts]
    return {
        "W": model.W_space.to_json(),
        "cone": {"rays": model.system.cone.generators.T.tolist()},
        "G": model.G.tolist(),
        "kappa": model.kappa.tolist(),
        "alpha": net.alpha,
        "drift": {"constant": model.theta_reduced.tolist()},
        "sigma": model.sigma_reduced.tolist(),
        "g": {"table": {"points": pts.tolist(), "values": vals}},
    }


def to_direct(scn: Scenario) -> tuple[ControlProblem, dict | None]:
    """The scenario's direct problem; network scenarios are reduced first."""
    if not scn.is_network:
        return scn.problem, None
    model = reduce(scn.network)
    block = reduced_direct(model, scn.network, scn.solver.h_grid)
    return _parse_direct(block, "reduced"), model.certificates


def problem_to_json(problem: ControlProblem) -> dict:
    return {
        "W": problem.W.to_json(),
        "cone": {"rays": problem.system.cone.generators.T.tolist()},
        "G": problem.system.G.tolist(),
        "kappa": problem.kappa.tolist(),
        "alpha": problem.alpha,
        "drift": problem.drift.to_json(),
        "sigma": problem.sigma.tolist(),
        "g": problem.g.to_json(),
    }


# ---------------------------------------------------------------- deterministic JSON


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating, bool)) or v is None for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written at 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))
