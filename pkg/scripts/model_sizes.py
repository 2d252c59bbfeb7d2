"""Variable and constraint counts of the scalability family.

Assembles every size up to --assemble-max and checks it against the count
formulas; larger sizes use the formulas only.

    python scripts/model_sizes.py --assemble-max 200
"""

from __future__ import annotations

import argparse
import time

from evrebalance.generator import GeneratorConfig, generate_instance, generator_counts
from evrebalance.model import assemble

SIZES = (10, 50, 100, 200, 400, 800, 1000)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--assemble-max", type=int, default=200)
    args = p.parse_args()
    print(f"{'N':>5} {'variables':>12} {'constraints':>12}  source       seconds")
    for n in SIZES:
        nvar, ncon = generator_counts(n)
        source, secs = "formula", 0.0
        if n <= args.assemble_max:
            t0 = time.perf_counter()
            m = assemble(generate_instance(GeneratorConfig(n, seed=0)))
            secs = time.perf_counter() - t0
            assert (m.n_cols, m.n_rows) == (nvar, ncon), (n, m.n_cols, m.n_rows)
            source = "assembled"
        print(f"{n:>5} {nvar:>12,} {ncon:>12,}  {source:<10} {secs:8.2f}")


if __name__ == "__main__":
    main()
