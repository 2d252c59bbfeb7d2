"""LP-based branch and bound for generic linear models.

Depth-first diving until the first incumbent, then best-bound selection.
Branches on the most fractional integer column, ties by lowest index, so a
run is fully determined by its inputs.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .lp import LinearProgram, solve_lp

log = logging.getLogger(__name__)

INT_TOL = 1e-6

Heuristic = Callable[[np.ndarray], Optional[np.ndarray]]


@dataclass
class SolverOptions:
    time_limit: float = 600.0
    abs_gap: float = 1e-7
    rel_gap: float = 1e-9
    relax_y: Optional[bool] = None  # None: on for non-myopic solves
    branching: str = "most-fractional"
    seed: int = 0
    lp_engine: str = "auto"
    node_limit: Optional[int] = None
    heuristics: bool = True

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time_limit must be > 0")
        if self.abs_gap < 0 or self.rel_gap < 0:
            raise ValueError("gaps must be >= 0")
        if self.branching != "most-fractional":
            raise ValueError(f"unknown branching rule {self.branching!r}")


@dataclass
class BnbResult:
    status: str  # optimal, infeasible, unbounded, time-limit, error (some LP unresolved)
    x: Optional[np.ndarray]
    objective: float
    bound: float
    nodes: int
    seconds: float
    lp_iterations: int = 0
    root_bound: float = float("nan")

    @property
    def gap(self) -> float:
        if self.x is None or not np.isfinite(self.bound):
            return float("inf")
        return abs(self.objective - self.bound) / max(1.0, abs(self.objective))


def most_fractional(x: np.ndarray, integer: np.ndarray) -> int:
    """Integer column whose value is farthest from an integer, -1 if none."""
    idx = np.nonzero(integer)[0]
    frac = np.abs(x[idx] - np.round(x[idx]))
    if frac.size == 0 or frac.max() <= INT_TOL:
        return -1
    best = frac.max()
    # first index within rounding noise of the maximum
    return int(idx[np.nonzero(frac >= best - 1e-12)[0][0]])


def branch_and_bound(
    model,
    options: Optional[SolverOptions] = None,
    integer: Optional[np.ndarray] = None,
    heuristic: Optional[Heuristic] = None,
    incumbent: Optional[np.ndarray] = None,
) -> BnbResult:
    """Minimize ``model`` (anything with c, matrix, senses, rhs, lb, ub, integer)."""
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    deadline = t0 + opts.time_limit
    lp = LinearProgram(model.c, model.matrix, model.senses, model.rhs, model.lb, model.ub)
    integer = model.integer if integer is None else integer

    best_x, best_obj = None, np.inf
    if incumbent is not None:
        best_x, best_obj = np.asarray(incumbent, float), float(model.c @ incumbent)

    def cutoff() -> float:
        if best_x is None:
            return np.inf
        return best_obj - max(opts.abs_gap, opts.rel_gap * abs(best_obj))

    counter = itertools.count()
    # node: (bound, seq, lb, ub)
    stack: list = [(-np.inf, next(counter), lp.lb.copy(), lp.ub.copy())]
    heap: list = []
    nodes = 0
    lp_iters = 0
    root_unbounded = False
    root_bound = np.nan
    timed_out = False
    unresolved = 0  # nodes whose relaxation the LP engine could not settle

    while stack or heap:
        if time.perf_counter() > deadline or (opts.node_limit is not None and nodes >= opts.node_limit):
            timed_out = True
            break
        if best_x is None and stack:
            bound, _, lb, ub = stack.pop()
        else:
            if stack:  # switch from diving to best-bound
                for item in stack:
                    heapq.heappush(heap, item)
                stack = []
            bound, _, lb, ub = heapq.heappop(heap)
        if bound >= cutoff():
            continue
        nodes += 1
        res = solve_lp(lp, lb, ub, engine=opts.lp_engine, time_limit=max(deadline - time.perf_counter(), 1e-3))
        lp_iters += res.iterations
        if nodes == 1:
            root_bound = res.objective if res.status == "optimal" else np.inf
        if res.status == "time-limit":
            timed_out = True
            heapq.heappush(heap, (bound, next(counter), lb, ub))
            break
        if res.status == "unbounded":
            if nodes == 1:
                root_unbounded = True
                break
            continue
        if res.status == "error":
            unresolved += 1
            log.warning("node %d: LP engine failed, node left unresolved", nodes)
            continue
        if res.status != "optimal" or res.objective >= cutoff():
            continue
        x = res.x
        j = most_fractional(x, integer)
        if j < 0:
            cand = x.copy()
            cand[integer] = np.round(cand[integer])
            obj = float(model.c @ cand)
            if obj < best_obj:
                best_x, best_obj = cand, obj
                log.debug("node %d: integral incumbent %.6f", nodes, obj)
            continue
        if heuristic is not None and opts.heuristics:
            cand = heuristic(x)
            if cand is not None:
                obj = float(model.c @ cand)
                if obj < best_obj:
                    best_x, best_obj = cand, obj
                    log.debug("node %d: heuristic incumbent %.6f", nodes, obj)
                    if res.objective >= cutoff():
                        continue
        v = x[j]
        down_ub = ub.copy()
        down_ub[j] = np.floor(v)
        up_lb = lb.copy()
        up_lb[j] = np.ceil(v)
        down = (res.objective, next(counter), lb, down_ub)
        up = (res.objective, next(counter), up_lb, ub)
        # dive toward the nearer rounding first (pushed last)
        first, second = (up, down) if v - np.floor(v) >= 0.5 else (down, up)
        if best_x is None:
            stack.append(second)
            stack.append(first)
        else:
            heapq.heappush(heap, first)
            heapq.heappush(heap, second)

    seconds = time.perf_counter() - t0
    if root_unbounded:
        return BnbResult("unbounded", None, -np.inf, -np.inf, nodes, seconds, lp_iters, root_bound)
    open_bounds = [item[0] for item in stack + heap]
    if timed_out or unresolved:
        bound = min(open_bounds + [best_obj]) if open_bounds else best_obj
        if unresolved:
            bound = -np.inf
        status = "time-limit" if timed_out else "error"
        return BnbResult(status, best_x, best_obj, bound, nodes, seconds, lp_iters, root_bound)
    if best_x is None:
        return BnbResult("infeasible", None, np.inf, np.inf, nodes, seconds, lp_iters, root_bound)
    return BnbResult("optimal", best_x, best_obj, best_obj, nodes, seconds, lp_iters, root_bound)
