"""Solve each scenario on its grid, then check several admissible policies against psi(w0).

Every admissible policy's cost bounds the value from above, so each estimate
(plus its error allowance) must sit above psi(w0) minus the grid slack.
"""
import argparse
from dataclasses import dataclass
from pathlib import Path

from sscontrol.hjb import build_grid, solve
from sscontrol.scenario import load_scenario, parse_policy, to_direct
from sscontrol.simulate import PolicySpec, compare_with_value, estimate_cost, simulate

ROOT = Path(__file__).resolve().parent.parent


@dataclass
class Config:
    scenarios: tuple = tuple(sorted(str(p) for p in (ROOT / "scenarios").glob("*.json")))
    n_paths: int = 100
    dt: float = 1e-3
    seed: int = 0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenarios", nargs="*")
    ap.add_argument("--paths", type=int, default=Config.n_paths)
    ap.add_argument("--dt", type=float, default=Config.dt)
    args = ap.parse_args()
    cfg = Config(tuple(args.scenarios) or Config.scenarios, args.paths, args.dt)
    print(f"{'scenario':<14}{'policy':<24}{'estimate':>12}{'psi(w0)':>12}{'gap':>11}  verdict")
    for path in cfg.scenarios:
        scn = load_scenario(path)
        problem, _ = to_direct(scn)
        gp = build_grid(problem, scn.solver.h_grid, scn.solver.n_dirs)
        vf = solve(gp, 0.0, scn.solver.tol, scn.solver.max_iter)
        policies = [parse_policy(scn.sim.policy), PolicySpec("ProjectToW"), PolicySpec("ProjectToW", optimal=True)]
        for pol in policies:
            paths = simulate(problem, pol, scn.sim.w0, cfg.n_paths, cfg.dt, scn.sim.T, cfg.seed)
            est = estimate_cost(paths, problem.kappa, problem.g, problem.alpha, problem.g.sup_abs_bound(problem.W))
            rep = compare_with_value(est, gp, vf, scn.sim.w0)
            tag = pol.kind + ("*" if pol.optimal else "")
            print(f"{scn.name:<14}{tag:<24}{est.mean:>12.5f}{rep['psi_w0']:>12.5f}{rep['gap']:>11.2e}  "
                  f"{'PASS' if rep['pass'] else 'FAIL'}")


if __name__ == "__main__":
    main()
