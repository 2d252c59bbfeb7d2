"""Command-line interface: ``evrebalance <command> ...``.

Exit status: 0 on success, 1 when the instance is infeasible (or no
solution was found), 2 on usage errors and unreadable input files.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bnb import SolverOptions
from .experiments import SweepSpec, run_sweep, sweep_csv
from .generator import GeneratorConfig, default_seed, generate_instance, generator_counts, illustrative_instance
from .instance import InstanceError, load_instance
from .model import MODES, ModelError, MilpModel, Solution, assemble
from .mps import MpsError, export_mps
from .render import render_solution
from .solver import solve

log = logging.getLogger("evrebalance")

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _thousands(n: int) -> str:
    return f"{n:,}".replace(",", " ")


def _write(text: str, path: Optional[str]) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _values_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _options(args) -> SolverOptions:
    relax = {"on": True, "off": False, "auto": None}[args.relax_y]
    return SolverOptions(time_limit=args.time_limit, abs_gap=args.abs_gap, rel_gap=args.rel_gap,
                         relax_y=relax, seed=args.seed if args.seed is not None else default_seed(),
                         lp_engine=args.lp_engine)


def _load(path: str):
    try:
        return load_instance(path)
    except FileNotFoundError:
        raise UsageError(f"{path}: no such file") from None


# --------------------------------------------------------------------------
# solution files
# --------------------------------------------------------------------------


def solution_to_dict(model: MilpModel, sol: Solution) -> dict:
    out = {
        "status": sol.status,
        "mode": model.mode,
        "method": sol.method,
        "objective": sol.objective if sol.feasible else None,
        "bound": sol.bound if math.isfinite(sol.bound) else None,
        "gap": sol.gap if math.isfinite(sol.gap) else None,
        "nodes": sol.nodes,
        "wall_seconds": round(sol.wall_seconds, 6),
        "messages": list(sol.messages),
    }
    if sol.values is not None:
        nz = np.nonzero(np.abs(sol.values) > 1e-9)[0]
        out["values"] = {model.col_name(int(k)): float(sol.values[k]) for k in nz}
    return out


def values_from_dict(model: MilpModel, data: dict, source: str = "solution") -> np.ndarray:
    index = {model.col_name(k): k for k in range(model.n_cols)}
    x = np.zeros(model.n_cols)
    values = data.get("values")
    if not isinstance(values, dict):
        raise UsageError(f"{source}: field 'values' missing or not an object")
    for name, v in values.items():
        if name not in index:
            raise UsageError(f"{source}: field 'values': unknown column {name!r}")
        try:
            x[index[name]] = float(v)
        except (TypeError, ValueError):
            raise UsageError(f"{source}: field 'values.{name}': expected a number, got {v!r}") from None
    return x


def _summary(model: MilpModel, sol: Solution) -> str:
    lines = [f"status: {sol.status}", f"method: {sol.method}  mode: {model.mode}"]
    if sol.feasible:
        lines.append(f"objective: {sol.objective:.6f}")
        if sol.status != "optimal" and math.isfinite(sol.bound):
            lines.append(f"bound: {sol.bound:.6f}  gap: {sol.gap:.3%}")
        L = model.layout
        counts = sol.values[L.block("Y")].reshape(L.nv, L.max_servers).sum(axis=1)
        placed = [f"{model.graph.vertex(v)}x{int(round(counts[v]))}" for v in np.nonzero(counts > 0.5)[0]]
        lines.append("servers: " + " ".join(placed))
        moved = int(np.sum(np.rint(sol.values[L.block("W")])))
        lines.append(f"arc flow units: {moved}")
    for m in sol.messages:
        lines.append(f"note: {m}")
    lines.append(f"wall seconds: {sol.wall_seconds:.3f}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    if args.illustrative:
        inst = illustrative_instance(capacity=args.capacity, seed=seed)
    else:
        if args.nodes is None:
            raise UsageError("generate: -N/--nodes is required unless --illustrative is given")
        try:
            cfg = GeneratorConfig(args.nodes, n_vehicles=args.vehicles, station_capacity=args.capacity,
                                  mu=args.mu, mu_policy=args.mu_policy, seed=seed)
        except ValueError as exc:
            raise UsageError(f"generate: {exc}") from None
        inst = generate_instance(cfg)
    _write(inst.to_json(), args.output)
    return EXIT_OK


def cmd_counts(args) -> int:
    nodes = args.nodes or [10, 50, 100, 200, 400, 800, 1000]
    rows = []
    for n in nodes:
        if n < 4:
            raise UsageError(f"counts: N={n} is below the 4 generator stations")
        nvar, ncon = generator_counts(n)
        source = "formula"
        if args.assemble:
            model = assemble(generate_instance(GeneratorConfig(n, seed=0)))
            if (model.n_cols, model.n_rows) != (nvar, ncon):
                raise RuntimeError(f"N={n}: assembled {model.n_cols}/{model.n_rows}, formula {nvar}/{ncon}")
            source = "assembled"
        rows.append((n, nvar, ncon, source))
    width = max(len("constraints"), *(len(_thousands(r[2])) for r in rows))
    out = [f"{'N':>6}  {'variables':>{width}}  {'constraints':>{width}}  source"]
    for n, nvar, ncon, source in rows:
        out.append(f"{n:>6}  {_thousands(nvar):>{width}}  {_thousands(ncon):>{width}}  {source}")
    _write("\n".join(out) + "\n", args.output)
    return EXIT_OK


def cmd_build(args) -> int:
    model = assemble(_load(args.instance), mode=args.mode)
    text = export_mps(model) if args.format == "mps" else model.summary() + "\n"
    _write(text, args.output)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _load(args.instance)
    model = assemble(inst, mode=args.mode)
    sol = solve(inst, args.mode, args.method, _options(args), model=model)
    sys.stdout.write(_summary(model, sol))
    if args.output:
        Path(args.output).write_text(json.dumps(solution_to_dict(model, sol), indent=1) + "\n")
    if args.dot:
        Path(args.dot).write_text(render_solution(inst, sol.values, model))
    return EXIT_OK if sol.feasible else EXIT_INFEASIBLE


def cmd_sweep(args) -> int:
    if args.instance:
        base = _load(args.instance)
    elif args.kind == "capacity":
        base = illustrative_instance(seed=args.seed if args.seed is not None else default_seed())
    else:
        base = generate_instance(GeneratorConfig(args.nodes, seed=args.seed if args.seed is not None else default_seed()))
    if args.workers < 1:
        raise UsageError("sweep: --workers must be >= 1")
    values = args.values
    if args.per_node:
        values = [v * base.node_count for v in values]
    try:
        spec = SweepSpec(args.kind, tuple(values), base, args.mode, args.method, _options(args))
    except ValueError as exc:
        raise UsageError(f"sweep: {exc}") from None
    points = run_sweep(spec, workers=args.workers)
    _write(sweep_csv(points), args.output)
    return EXIT_OK


def cmd_render(args) -> int:
    inst = _load(args.instance)
    model = assemble(inst, mode=args.mode)
    if args.solution:
        try:
            data = json.loads(Path(args.solution).read_text())
        except FileNotFoundError:
            raise UsageError(f"{args.solution}: no such file") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.solution}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if data.get("mode", args.mode) != args.mode:
            model = assemble(inst, mode=data["mode"])
        values = values_from_dict(model, data, args.solution)
    else:
        sol = solve(inst, args.mode, args.method, _options(args), model=model)
        if not sol.feasible:
            sys.stderr.write(f"render: no solution ({sol.status})\n")
            return EXIT_INFEASIBLE
        values = sol.values
    _write(render_solution(inst, values, model), args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _solver_flags(p: argparse.ArgumentParser, method: bool = True) -> None:
    p.add_argument("--mode", choices=MODES, default="myopic")
    if method:
        p.add_argument("--method", choices=("exact", "greedy", "brute"), default="exact")
    p.add_argument("--time-limit", type=float, default=600.0, help="seconds per solve")
    p.add_argument("--abs-gap", type=float, default=1e-7)
    p.add_argument("--rel-gap", type=float, default=1e-9)
    p.add_argument("--relax-y", choices=("auto", "on", "off"), default="auto",
                   help="treat Y as continuous (auto: on for non-myopic)")
    p.add_argument("--lp-engine", choices=("auto", "simplex", "highs"), default="auto")
    p.add_argument("--seed", type=int, default=None, help="defaults to $REBALANCE_SEED or 0")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evrebalance", description="Idle-vehicle rebalancing for electric carsharing.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a random instance file")
    p.add_argument("-N", "--nodes", type=int)
    p.add_argument("--vehicles", type=int, default=10)
    p.add_argument("--capacity", type=int, default=4, help="charging paths per station")
    p.add_argument("--mu", type=float, default=None, help="service rate (default: N)")
    p.add_argument("--mu-policy", choices=("uniform", "random"), default="uniform")
    p.add_argument("--illustrative", action="store_true", help="the six-node capacity-study instance")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("counts", help="variable and constraint counts of generator models")
    p.add_argument("-N", "--nodes", type=int, action="append", help="repeatable; default: the seven table sizes")
    p.add_argument("--assemble", action="store_true", help="assemble each model and check the formula")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_counts)

    p = sub.add_parser("build", help="assemble a model and export it")
    p.add_argument("instance")
    p.add_argument("--mode", choices=MODES, default="myopic")
    p.add_argument("--format", choices=("mps", "summary"), default="mps")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("solve", help="solve an instance")
    p.add_argument("instance")
    _solver_flags(p)
    p.add_argument("-o", "--output", help="solution JSON file")
    p.add_argument("--dot", help="also write a DOT rendering here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve over a range of capacities or service rates")
    p.add_argument("--kind", choices=("capacity", "mu"), required=True)
    p.add_argument("--values", type=_values_list, required=True, help="comma-separated, strictly monotone")
    p.add_argument("--per-node", action="store_true", help="values are multiples of N")
    p.add_argument("--instance", help="base instance (default: generated)")
    p.add_argument("-N", "--nodes", type=int, default=50, help="generator size for mu sweeps")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    _solver_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="DOT graph of a solution")
    p.add_argument("instance")
    p.add_argument("--solution", help="solution JSON from `solve -o` (default: solve now)")
    _solver_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InstanceError, MpsError, ModelError) as exc:
        sys.stderr.write(f"evrebalance {args.command}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
