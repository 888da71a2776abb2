"""Uniqueness probe on the two one-dimensional examples across grid spacings.

With kappa = (2, -1) every start converges to psi = -x; with kappa = (1, -1)
the start -c settles on a shifted fixed point, so the sup difference tracks c.
"""
import argparse
from dataclasses import dataclass, field

from sscontrol.cones import ControlCone, ControlSystem, check_conditions
from sscontrol.geometry import Interval
from sscontrol.hjb import build_grid, uniqueness_probe
from sscontrol.problem import AffineDrift, ControlProblem, MaxAffineCost


@dataclass
class Config:
    spacings: list = field(default_factory=lambda: [0.05, 0.02, 0.01, 0.005])
    offsets: list = field(default_factory=lambda: [1.0, 5.0])


def problem(kappa):
    sys_ = ControlSystem(ControlCone.orthant(2), [[1.0, -1.0]], kappa)
    return ControlProblem(Interval(0.0, 1.0), sys_, AffineDrift([0.0]), [[0.0]], MaxAffineCost.constant(0.0, 1))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--offsets", type=float, nargs="+")
    args = ap.parse_args()
    cfg = Config(offsets=args.offsets) if args.offsets else Config()
    for label, kappa in (("kappa=(2,-1)", [2.0, -1.0]), ("kappa=(1,-1)", [1.0, -1.0])):
        rep = check_conditions(problem(kappa).system)
        print(f"{label}: strict subsolution {rep.strict_subsolution_exists}, unique {rep.unique}")
        for h in cfg.spacings:
            pr = uniqueness_probe(build_grid(problem(kappa), h), cfg.offsets)
            print(f"  h={h:<6} {pr.flag:<20} max sup difference {pr.max_difference:.6f}")


if __name__ == "__main__":
    main()
