"""Reduce a network scenario to its workload problem and tabulate the effective cost."""
import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sscontrol.cones import check_conditions
from sscontrol.network import network_controllable, network_no_arbitrage, effective_cost, reduce
from sscontrol.scenario import load_scenario

ROOT = Path(__file__).resolve().parent.parent


@dataclass
class Config:
    scenario: str = str(ROOT / "scenarios" / "network_2d.json")
    samples: int = 8
    seed: int = 0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=Config.scenario)
    ap.add_argument("--samples", type=int, default=Config.samples)
    ap.add_argument("--seed", type=int, default=Config.seed)
    cfg = Config(**vars(ap.parse_args()))
    net = load_scenario(cfg.scenario).network
    if net is None:
        raise SystemExit(f"{cfg.scenario} is not a network scenario")
    model = reduce(net)
    np.set_printoptions(precision=4, suppress=True)
    print(f"m={net.m} n={net.n} p={net.p} -> d={model.d}")
    print("M =\n", model.M)
    print("G =\n", model.G)
    print("kappa =", model.kappa, " pi =", model.pi)
    print("W vertices =\n", model.W_space.vertices)
    print("certificates:", model.certificates)
    print(f"network controllable {network_controllable(net)}, network no arbitrage {network_no_arbitrage(net)}")
    if model.system is not None:
        rep = check_conditions(model.system)
        print(f"reduced system: controllable {rep.controllable}, no arbitrage {rep.no_arbitrage}, unique {rep.unique}")
    rng = np.random.default_rng(cfg.seed)
    print("effective cost at sampled workloads:")
    for z in rng.uniform(net.z_lo, net.z_hi, size=(cfg.samples, net.m)):
        w = model.M @ z
        g, zs = effective_cost(model, net, w)
        print(f"  w={w}  g={g:.6f}  minimizer z={zs}")


if __name__ == "__main__":
    main()
