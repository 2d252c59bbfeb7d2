"""Exact, heuristic and exhaustive solvers for assembled rebalancing models."""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np

from .bnb import INT_TOL, SolverOptions, branch_and_bound as _bnb
from .instance import Instance
from .lp import solve_lp
from .model import (
    MYOPIC,
    NON_MYOPIC,
    MilpModel,
    Solution,
    assemble,
    check_solution,
    compose_values,
    placement_counts,
    finalize,
)
from .subproblems import assign_demand, min_cost_flow

log = logging.getLogger(__name__)

ENUMERATION_GUARD = 10_000_000
HEURISTIC_SECONDS = 15.0  # cap on one capacitated assignment inside a heuristic

__all__ = [
    "SolverOptions",
    "branch_and_bound",
    "greedy_place",
    "brute_force",
    "evaluate_placement",
    "solve",
    "PlacementValue",
]


# --------------------------------------------------------------------------
# placement evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PlacementValue:
    feasible: bool
    objective: float
    access: float = math.inf
    relocation: float = math.inf
    infeasibility: float = 0.0  # penalty guiding local search toward feasibility
    values: Optional[np.ndarray] = None

    @property
    def key(self) -> tuple[float, float]:
        return (self.infeasibility, self.objective if self.feasible else math.inf)


def _infeasibility(model: MilpModel, counts: np.ndarray) -> float:
    """Uncovered demand vertices plus queueing overload, zero for feasible-looking placements."""
    inst, g = model.instance, model.graph
    lev = g.vertex_level
    placed = counts > 0
    top = lev[placed].max(initial=0)
    uncovered = float(np.sum(lev > top))
    over = 0.0
    if model.mode == NON_MYOPIC:
        from .subproblems import server_capacity

        over = max(0.0, inst.arrival_rate.sum() - server_capacity(inst, counts).sum())
    return uncovered + over


def evaluate_placement(
    model: MilpModel, counts, with_values: bool = True, time_limit: Optional[float] = None
) -> PlacementValue:
    """Objective of the best completion of a fixed server placement.

    ``time_limit`` bounds the capacitated assignment search; the completion
    is then feasible but possibly not the best one.
    """
    inst = model.instance
    counts = np.asarray(counts, dtype=np.int64)
    asg = assign_demand(inst, counts, model.mode, model.graph, time_limit=time_limit)
    if asg.server is None:
        return PlacementValue(False, math.inf, infeasibility=max(_infeasibility(model, counts), 1.0))
    flow = min_cost_flow(inst, counts, model.graph, model.paths)
    if flow.status != "optimal":
        return PlacementValue(False, math.inf, infeasibility=1.0)
    values = None
    if with_values:
        values = compose_values(model, asg.server, counts, flow.arc_flow, flow.path_flow)
    return PlacementValue(True, asg.cost + flow.cost, asg.cost, flow.cost, 0.0, values)


def _round_placement(y_sum: np.ndarray, B: int, C: int) -> np.ndarray:
    """Largest-remainder rounding of fractional server counts to B servers, at most C per vertex."""
    y = np.clip(y_sum, 0, C)
    base = np.floor(y + 1e-9).astype(np.int64)
    rem = y - base
    short = B - int(base.sum())
    order = np.lexsort((np.arange(len(y)), -rem))
    for v in order:
        if short <= 0:
            break
        if base[v] < C:
            base[v] += 1
            short -= 1
    while short < 0:
        v = int(np.argmax(base))
        base[v] -= 1
        short += 1
    return base


# --------------------------------------------------------------------------
# exact
# --------------------------------------------------------------------------


class _SearchModel:
    """The model as seen by the tree search: arc flows capped at the fleet size."""

    def __init__(self, model: MilpModel, fleet: int):
        self.c, self.matrix, self.senses, self.rhs = model.c, model.matrix, model.senses, model.rhs
        self.lb, self.integer = model.lb, model.integer
        self.ub = model.ub.copy()
        self.ub[model.layout.block("W")] = float(fleet)


def branch_and_bound(
    model: MilpModel, options: Optional[SolverOptions] = None, incumbent: Optional[np.ndarray] = None
) -> Solution:
    """Solve the assembled model to optimality (within the gap tolerances).

    ``incumbent`` is an optional starting solution; it is ignored unless it
    satisfies every row, bound and integrality requirement of ``model``.
    """
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    deadline = t0 + opts.time_limit
    relax_y = opts.relax_y if opts.relax_y is not None else model.mode == NON_MYOPIC
    L = model.layout
    B = model.instance.n_vehicles
    C = L.max_servers

    tried: dict[bytes, Optional[np.ndarray]] = {}

    def heuristic(x: np.ndarray) -> Optional[np.ndarray]:
        y = x[L.block("Y")].reshape(L.nv, C).sum(axis=1)
        counts = _round_placement(y, B, C)
        key = counts.tobytes()
        if key not in tried:
            budget = min(HEURISTIC_SECONDS, max(deadline - time.perf_counter(), 0.0) / 10 + 1e-3)
            pv = evaluate_placement(model, counts, time_limit=budget)
            tried[key] = pv.values if pv.feasible else None
        return tried[key]

    # Arc costs are non-negative and every cycle stays on one level, so cancelling
    # cycles never hurts: some optimal flow is a union of at most B unit paths.
    search = _SearchModel(model, B)
    integer = model.integer.copy()
    if relax_y:
        integer[L.block("Y")] = False
    messages = []
    if incumbent is not None and not check_solution(model, incumbent).feasible:
        messages.append("starting solution rejected: infeasible for this model")
        incumbent = None
    res = _bnb(search, opts, integer=integer, heuristic=heuristic, incumbent=incumbent)
    if relax_y and res.x is not None:
        y = res.x[L.block("Y")]
        frac = float(np.max(np.abs(y - np.round(y)), initial=0.0))
        if frac > INT_TOL:
            msg = f"relaxed Y came back fractional (max {frac:.3g}); re-solving with integer Y"
            log.warning(msg)
            messages.append(msg)
            remaining = opts.time_limit - (time.perf_counter() - t0)
            if remaining <= 0:
                res = replace(res, status="time-limit", x=None)
            else:
                res = _bnb(search, replace(opts, time_limit=remaining), heuristic=heuristic,
                           incumbent=incumbent)
    wall = time.perf_counter() - t0
    common = dict(nodes=res.nodes, wall_seconds=wall, method="exact", messages=tuple(messages),
                  extra={"root_bound": res.root_bound, "lp_iterations": res.lp_iterations})
    if res.x is None:
        status = res.status if res.status != "optimal" else "infeasible"
        return Solution(status=status, bound=res.bound, **common)
    return finalize(model, res.x, res.status, bound=res.bound, gap=res.gap, **common)


# --------------------------------------------------------------------------
# greedy vertex substitution
# --------------------------------------------------------------------------


def _initial_counts(model: MilpModel) -> np.ndarray:
    C = model.layout.max_servers
    stock = model.instance.idle_stock.reshape(-1).astype(np.int64)
    counts = np.minimum(stock, C)
    extra = int(stock.sum() - counts.sum())
    # park overflow vehicles at the nearest free slots in vertex order
    for v in range(len(counts)):
        if extra == 0:
            break
        add = min(C - counts[v], extra)
        counts[v] += add
        extra -= add
    return counts


def greedy_place(model: MilpModel, options: Optional[SolverOptions] = None, lp_bound: bool = False) -> Solution:
    """Vertex-substitution local search over server placements.

    Starts from the initial stock; each pass moves one server to the vertex
    that improves the objective most, until no single move improves it.
    Infeasible placements are ranked by a coverage/capacity penalty so the
    search can walk out of them; if it still ends infeasible, it restarts
    from the first feasible placement found by the tree search.
    """
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    inst = model.instance
    if inst.n_vehicles < 1:
        return Solution(status="infeasible", method="greedy", wall_seconds=time.perf_counter() - t0)
    nv, C = model.layout.nv, model.layout.max_servers
    cache: dict[bytes, PlacementValue] = {}

    def value(c: np.ndarray) -> PlacementValue:
        k = c.tobytes()
        if k not in cache:
            cache[k] = evaluate_placement(model, c, with_values=False, time_limit=HEURISTIC_SECONDS / 10)
        return cache[k]

    deadline = t0 + opts.time_limit
    swaps = passes = 0

    def descend(counts: np.ndarray) -> tuple[np.ndarray, PlacementValue]:
        nonlocal swaps, passes
        best = value(counts)
        improved = True
        while improved and time.perf_counter() < deadline:
            improved = False
            passes += 1
            move = None
            for src in np.nonzero(counts)[0]:
                for dst in range(nv):
                    if dst == src or counts[dst] >= C:
                        continue
                    cand = counts.copy()
                    cand[src] -= 1
                    cand[dst] += 1
                    pv = value(cand)
                    if pv.key < best.key and (move is None or pv.key < move[1].key):
                        move = (cand, pv)
            if move is not None and (move[1].key[0] < best.key[0] or move[1].objective < best.objective - 1e-12):
                counts, best = move
                swaps += 1
                improved = True
        return counts, best

    counts, best = descend(_initial_counts(model))
    extra = {"restarted": False}
    if not best.feasible and time.perf_counter() < deadline:
        # Single moves can stall between infeasible placements. Restart from the
        # first feasible placement of the tree search, which is complete.
        first = branch_and_bound(model, replace(opts, abs_gap=math.inf,
                                                time_limit=max(deadline - time.perf_counter(), 1e-3)))
        extra["restarted"] = True
        if first.status == "infeasible":
            wall = time.perf_counter() - t0
            extra.update(swaps=swaps, passes=passes, evaluations=len(cache))
            return Solution(status="infeasible", method="greedy", wall_seconds=wall, extra=extra)
        if first.values is not None:
            start = np.rint(placement_counts(model, first.values)).astype(np.int64)
            counts, best = descend(start)
    wall = time.perf_counter() - t0
    extra.update(swaps=swaps, passes=passes, evaluations=len(cache))
    if not best.feasible:
        return Solution(status="time-limit", method="greedy", wall_seconds=wall, extra=extra)
    pv = evaluate_placement(model, counts, time_limit=HEURISTIC_SECONDS)
    bound, gap = float("nan"), float("nan")
    if lp_bound:
        lp = solve_lp(model, engine=opts.lp_engine)
        if lp.optimal:
            bound = lp.objective
            gap = (pv.objective - bound) / max(1.0, abs(pv.objective))
    return finalize(model, pv.values, "feasible", bound=bound, gap=gap, wall_seconds=wall,
                    method="greedy", extra=extra)


# --------------------------------------------------------------------------
# exhaustive oracle
# --------------------------------------------------------------------------


def placement_space_size(nv: int, B: int, C: int) -> int:
    """Number of ways to put B identical servers on nv vertices with at most C per vertex."""
    # coefficient of z^B in (1 + z + ... + z^C)^nv
    poly = [1]
    for _ in range(nv):
        nxt = [0] * min(len(poly) + C, B + 1)
        for i, a in enumerate(poly):
            if a == 0:
                continue
            for k in range(C + 1):
                if i + k <= B:
                    nxt[i + k] += a
        poly = nxt
    return poly[B] if B < len(poly) else 0


def iter_placements(nv: int, B: int, C: int) -> Iterator[np.ndarray]:
    """All count vectors with sum B and entries in 0..C, in lexicographic order."""
    counts = np.zeros(nv, dtype=np.int64)

    def rec(v: int, left: int):
        if v == nv - 1:
            if left <= C:
                counts[v] = left
                yield counts.copy()
            return
        for k in range(min(C, left), -1, -1):
            if left - k > C * (nv - 1 - v):
                break
            counts[v] = k
            yield from rec(v + 1, left - k)
        counts[v] = 0

    if nv == 0:
        return
    yield from rec(0, B)


def _enumerate_assignment(model: MilpModel, counts: np.ndarray) -> tuple[float, Optional[np.ndarray]]:
    """Cheapest assignment by exhaustive search (non-myopic capacities honored)."""
    inst, g = model.instance, model.graph
    lev, node = g.vertex_level, g.vertex_node
    lam = inst.arrival_rate.reshape(-1)
    t = inst.travel_time
    placed = [int(v) for v in np.nonzero(counts)[0]]
    options = []
    for d in range(g.n_vertices):
        opts = [s for s in placed if lev[s] >= lev[d]]
        if not opts:
            return math.inf, None
        options.append(opts)
    if model.mode == MYOPIC:
        choice = [min(o, key=lambda s: (t[node[d], node[s]], s)) for d, o in enumerate(options)]
        return float(sum(lam[d] * t[node[d], node[s]] for d, s in enumerate(choice))), np.array(choice)
    rho = (0.0,) + inst.rho_table().coefficients
    mu = inst.service_rate.reshape(-1)
    cap = {s: mu[s] * rho[counts[s]] for s in placed}
    best = [math.inf, None]
    load = dict.fromkeys(placed, 0.0)
    choice = [0] * g.n_vertices

    def rec(d: int, acc: float):
        if acc >= best[0]:
            return
        if d == g.n_vertices:
            best[0], best[1] = acc, np.array(choice)
            return
        for s in options[d]:
            if load[s] + lam[d] <= cap[s] + 1e-9:
                load[s] += lam[d]
                choice[d] = s
                rec(d + 1, acc + lam[d] * t[node[d], node[s]])
                load[s] -= lam[d]

    rec(0, 0.0)
    return best[0], best[1]


def brute_force(model: MilpModel) -> Solution:
    """Global optimum by enumerating every placement (guarded for size)."""
    t0 = time.perf_counter()
    inst = model.instance
    nv, C, B = model.layout.nv, model.layout.max_servers, inst.n_vehicles
    size = placement_space_size(nv, B, C)
    if size > ENUMERATION_GUARD:
        raise ValueError(f"{size} placements exceed the enumeration guard of {ENUMERATION_GUARD}")
    best_obj, best = math.inf, None
    for counts in iter_placements(nv, B, C):
        access, choice = _enumerate_assignment(model, counts)
        if choice is None or access >= best_obj:
            continue
        flow = min_cost_flow(inst, counts, model.graph, model.paths)
        if flow.status != "optimal":
            continue
        z = access + flow.cost
        if z < best_obj - 1e-12:
            best_obj = z
            best = (choice, counts.copy(), flow)
    wall = time.perf_counter() - t0
    if best is None:
        return Solution(status="infeasible", method="brute", wall_seconds=wall, extra={"placements": size})
    choice, counts, flow = best
    values = compose_values(model, choice, counts, flow.arc_flow, flow.path_flow)
    return finalize(model, values, "optimal", bound=best_obj, gap=0.0, wall_seconds=wall, method="brute",
                    extra={"placements": size})


# --------------------------------------------------------------------------
# facade
# --------------------------------------------------------------------------


def solve(instance: Instance, mode: str = MYOPIC, method: str = "exact",
          options: Optional[SolverOptions] = None, model: Optional[MilpModel] = None,
          incumbent: Optional[np.ndarray] = None) -> Solution:
    """Assemble (unless ``model`` is given) and solve with the named method."""
    model = model or assemble(instance, mode=mode)
    if method == "exact":
        return branch_and_bound(model, options, incumbent=incumbent)
    if method == "greedy":
        return greedy_place(model, options)
    if method == "brute":
        return brute_force(model)
    raise ValueError(f"unknown method {method!r}")
