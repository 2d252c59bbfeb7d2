"""Non-myopic service-rate sweep on a generator instance.

    python scripts/mu_sweep.py -N 50 --time-limit 150 --workers 5
"""

from __future__ import annotations

import argparse
import logging
import sys

from evrebalance.bnb import SolverOptions
from evrebalance.experiments import SweepSpec, run_sweep, sweep_csv
from evrebalance.generator import GeneratorConfig, generate_instance


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("-N", "--nodes", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--factors", default="0.1,0.5,1.0,1.2,1.4", help="multiples of N")
    p.add_argument("--time-limit", type=float, default=150.0)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    base = generate_instance(GeneratorConfig(args.nodes, seed=args.seed))
    values = tuple(float(f) * args.nodes for f in args.factors.split(","))
    spec = SweepSpec("mu", values, base, mode="non-myopic", options=SolverOptions(time_limit=args.time_limit))
    sys.stdout.write(sweep_csv(run_sweep(spec, workers=args.workers)))


if __name__ == "__main__":
    main()
