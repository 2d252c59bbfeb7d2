"""Optimal objective of the six-node instance at station capacities 1, 2, 3.

    python scripts/capacity_study.py --seeds 10
"""

from __future__ import annotations

import argparse

from evrebalance.experiments import SweepSpec, run_sweep
from evrebalance.generator import illustrative_instance


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--mode", default="myopic")
    args = p.parse_args()
    print("seed      Z(u=1)      Z(u=2)      Z(u=3)  strict")
    for seed in range(args.seeds):
        spec = SweepSpec("capacity", (1, 2, 3), illustrative_instance(seed=seed), mode=args.mode)
        z = [pt.Z for pt in run_sweep(spec)]
        strict = z[0] > z[1] + 1e-9 or z[1] > z[2] + 1e-9
        print(f"{seed:>4} {z[0]:11.4f} {z[1]:11.4f} {z[2]:11.4f}  {'yes' if strict else 'no'}")


if __name__ == "__main__":
    main()
