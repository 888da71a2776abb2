"""Command line front end: check, reduce, solve, simulate.

Exit codes: 0 success, 2 validation error, 3 non-convergence,
4 negative verdict under ``check --require-unique``.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .cones import check_conditions
from .errors import NotConverged, ScenarioError, SSControlError
from .hjb import build_grid, solve, uniqueness_probe, write_field_csv
from .network import reduce
from .scenario import (
    SCHEMA_VERSION,
    dumps,
    load_scenario,
    parse_policy,
    reduced_direct,
    to_direct,
    write_json,
)
from .simulate import (
    check_integration_by_parts,
    compare_with_value,
    estimate_cost,
    simulate,
    write_paths_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_NEGATIVE = 0, 2, 3, 4


def _emit(report: dict, out: str | None) -> None:
    text = dumps(report)
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


def verdict_line(report) -> str:
    if not report.solvable:
        return "DPE not solvable: " + ("G does not cover R^d" if not report.controllable
                                       else "Hamiltonian is infinite somewhere")
    if report.unique:
        return "DPE solvable (value finite); solution unique"
    return "DPE solvable (value finite); uniqueness not guaranteed (no strict subsolution)"


def cmd_check(args) -> int:
    scn = load_scenario(args.scenario)
    extra = {}
    if scn.is_network:
        model = reduce(scn.network)
        if model.system is None:
            raise ScenarioError("network: reduced system has no control directions")
        system = model.system
        extra["certificates"] = model.certificates
    else:
        system = scn.problem.system
    rep = check_conditions(system)
    report = {"command": "check", "scenario": scn.name, **rep.to_json(), "verdict": verdict_line(rep), **extra}
    _emit(report, args.out)
    if args.require_unique and not rep.unique:
        return EXIT_NEGATIVE
    return EXIT_OK


def cmd_reduce(args) -> int:
    scn = load_scenario(args.scenario)
    if not scn.is_network:
        raise ScenarioError(f"{args.scenario}: reduce needs a 'network' scenario")
    h = args.grid_h if args.grid_h is not None else scn.solver.h_grid
    model = reduce(scn.network)
    solver = scn.solver.to_json()
    solver["h_grid"] = h
    out = {"schema_version": SCHEMA_VERSION, "name": f"{scn.name}-reduced"}
    if model.system is not None:
        out["direct"] = reduced_direct(model, scn.network, h)
    else:
        # range(K) meets the orthant only at 0: the workload data stands, but there is no control problem
        out["controls"] = "none"
    out.update({
        "solver": solver,
        "sim": scn.sim.to_json(),
        "reduction": {
            "d": model.d,
            "M": model.M.tolist(),
            "G": model.G.tolist(),
            "kappa": model.kappa.tolist(),
            "pi": model.pi.tolist(),
            "W": model.W_space.to_json(),
            "Gamma": model.Gamma_reduced.tolist(),
            "certificates": model.certificates,
        },
    })
    write_json(args.out, out)
    summary = {"command": "reduce", "scenario": scn.name, "output": str(args.out), "d": model.d,
               "has_controls": model.system is not None, "certificates": model.certificates}
    sys.stdout.write(dumps(summary))
    return EXIT_OK


def _grid_options(args, scn):
    s = scn.solver
    return {
        "h_grid": args.grid_h if args.grid_h is not None else s.h_grid,
        "n_dirs": args.dirs if args.dirs is not None else s.n_dirs,
        "tol": args.tol if args.tol is not None else s.tol,
        "max_iter": args.max_iter if args.max_iter is not None else s.max_iter,
        "probe_offsets": args.probe_offsets if args.probe_offsets is not None else s.probe_offsets,
    }


def _artifact(args, scn, suffix: str) -> Path:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / f"{scn.name}{suffix}"


def cmd_solve(args) -> int:
    scn = load_scenario(args.scenario)
    problem, certs = to_direct(scn)
    opt = _grid_options(args, scn)
    gp = build_grid(problem, opt["h_grid"], opt["n_dirs"])
    vf = solve(gp, 0.0, opt["tol"], opt["max_iter"])
    field_path = _artifact(args, scn, ".field.csv")
    write_field_csv(field_path, gp, vf)
    summary = {
        "command": "solve",
        "scenario": scn.name,
        "options": opt,
        "n_nodes": gp.n_nodes,
        "converged": vf.converged,
        "iterations": vf.iterations,
        "residual_inf": vf.residual_inf,
        "resid_tol": vf.resid_tol,
        "field_csv": field_path.name,
    }
    if certs is not None:
        summary["reduction_certificates"] = certs
    code = EXIT_OK if vf.converged else EXIT_NOT_CONVERGED
    if vf.converged and opt["probe_offsets"]:
        try:
            pr = uniqueness_probe(gp, opt["probe_offsets"], opt["tol"], opt["max_iter"])
            summary["probe"] = {"inits": pr.inits, "sup_differences": pr.sup_differences,
                                "max_difference": pr.max_difference, "flag": pr.flag}
        except NotConverged as exc:
            summary["probe"] = {"error": str(exc)}
            code = EXIT_NOT_CONVERGED
    write_json(_artifact(args, scn, ".solve.json"), summary)
    sys.stdout.write(dumps(summary))
    return code


def _load_field(path: Path, gp) -> np.ndarray | None:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != gp.n_nodes:
        return None
    cols = [f"x{i + 1}" for i in range(gp.d)]
    X = np.array([[float(r[c]) for c in cols] for r in rows])
    if not np.allclose(X, gp.nodes, atol=1e-12):
        return None
    return np.array([float(r["psi"]) for r in rows])


def cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario)
    problem, _ = to_direct(scn)
    sim = scn.sim
    policy = parse_policy(json.loads(args.policy) if args.policy and args.policy.startswith("{")
                          else (args.policy or sim.policy), "--policy")
    w0 = args.w0 if args.w0 is not None else sim.w0
    if w0 is None:
        raise ScenarioError("sim.w0: initial state required (scenario or --w0)")
    w0 = np.atleast_1d(np.asarray(w0, dtype=float))
    if w0.shape != (problem.d,):
        raise ScenarioError(f"--w0: expected {problem.d} coordinates")
    n_paths = args.paths if args.paths is not None else sim.n_paths
    seed = args.seed if args.seed is not None else sim.seed
    dt = args.dt if args.dt is not None else sim.dt
    T = args.horizon if args.horizon is not None else sim.T
    paths = simulate(problem, policy, w0, n_paths, dt, T, seed)
    est = estimate_cost(paths, problem.kappa, problem.g, problem.alpha, problem.g.sup_abs_bound(problem.W))
    report = {
        "command": "simulate",
        "scenario": scn.name,
        "options": {"policy": policy.to_json(), "w0": w0, "paths": n_paths, "seed": seed, "dt": dt,
                    "horizon": paths[0].times[-1]},
        "estimate": est.to_json(),
        "integration_by_parts_max": max(check_integration_by_parts(p, problem.kappa, problem.alpha) for p in paths),
    }
    summary_path = _artifact(args, scn, ".solve.json")
    field_path = _artifact(args, scn, ".field.csv")
    if summary_path.exists() and field_path.exists():
        solved = json.loads(summary_path.read_text())
        gp = build_grid(problem, solved["options"]["h_grid"], solved["options"]["n_dirs"])
        psi = _load_field(field_path, gp)
        if psi is not None and solved.get("converged"):
            report["compare_with_value"] = compare_with_value(est, gp, psi, w0)
    if args.dump:
        write_paths_csv(args.dump, paths)
        report["dump"] = str(args.dump)
    write_json(_artifact(args, scn, ".simulate.json"), report)
    sys.stdout.write(dumps(report))
    return EXIT_OK


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sscontrol", description="State-constrained singular control toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="evaluate the solvability / uniqueness conditions")
    p.add_argument("scenario")
    p.add_argument("--require-unique", action="store_true", help="exit 4 unless the solution is unique")
    p.add_argument("--out", help="also write the report to this file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("reduce", help="reduce a Brownian network scenario to direct form")
    p.add_argument("scenario")
    p.add_argument("--out", required=True, help="path of the reduced scenario JSON")
    p.add_argument("--grid-h", type=float, help="spacing of the effective-cost table")
    p.set_defaults(func=cmd_reduce)

    for name, func, text in (("solve", cmd_solve, "solve the dynamic programming equation on a grid"),
                             ("simulate", cmd_simulate, "Monte Carlo cost of an admissible policy")):
        p = sub.add_parser(name, help=text)
        p.add_argument("scenario")
        p.add_argument("--out-dir", default=".", help="directory for reports, fields and dumps")
        p.set_defaults(func=func)
        if name == "solve":
            p.add_argument("--grid-h", type=float)
            p.add_argument("--dirs", type=int)
            p.add_argument("--tol", type=float)
            p.add_argument("--max-iter", type=int)
            p.add_argument("--probe-offsets", type=_floats, help="comma-separated constants c; inits -|c|")
        else:
            p.add_argument("--policy", help="policy kind or JSON object")
            p.add_argument("--paths", type=int)
            p.add_argument("--seed", type=int)
            p.add_argument("--dt", type=float)
            p.add_argument("--horizon", type=float)
            p.add_argument("--w0", type=_floats)
            p.add_argument("--dump", help="write simulated paths to this CSV")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NotConverged as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NOT_CONVERGED
    except (SSControlError, ValueError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_INVALID


def run() -> None:
    sys.exit(main())

