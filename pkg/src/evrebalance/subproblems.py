"""Fixed-placement subproblems: demand assignment and vehicle routing.

Once the server placement (servers per node-charge) is fixed, the model
splits into an assignment of demand to servers and a minimum-cost flow
moving the idle stock onto the placement.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph import CHARGING, ChargingPathSet, NodeChargeGraph, build_graph, charging_paths
from .instance import Instance
from .model import FAMILIES, MYOPIC, NON_MYOPIC, LinearModel

log = logging.getLogger(__name__)

CAP_TOL = 1e-9  # slack on queueing capacity rows


@dataclass(frozen=True)
class Assignment:
    status: str  # optimal, feasible (time limit) or infeasible
    server: Optional[np.ndarray] = None  # chosen server vertex per demand vertex
    cost: float = float("inf")


@dataclass(frozen=True)
class Flow:
    status: str  # optimal or infeasible
    arc_flow: Optional[np.ndarray] = None
    path_flow: Optional[np.ndarray] = None
    cost: float = float("inf")  # theta * sum c W
    repaired: bool = False


def _check_counts(instance: Instance, counts) -> np.ndarray:
    counts = np.asarray(counts)
    if counts.shape != (instance.node_charges,):
        counts = counts.reshape(-1)
    if np.any(counts < 0) or np.any(counts > instance.max_servers):
        raise ValueError("placement counts must lie in 0..max_servers")
    return counts.astype(np.int64)


def server_capacity(instance: Instance, counts: np.ndarray) -> np.ndarray:
    """Admissible arrival rate per vertex: mu * rho[count], zero when empty."""
    rho = np.concatenate([[0.0], instance.rho_table().coefficients])
    return instance.service_rate.reshape(-1) * rho[counts]


def assign_demand(
    instance: Instance,
    counts,
    mode: str = MYOPIC,
    graph: Optional[NodeChargeGraph] = None,
    time_limit: Optional[float] = None,
) -> Assignment:
    """Assign every demand vertex to one covering occupied vertex.

    Myopic: nearest covering server (ties by lowest node, then lowest
    level). Non-myopic: the cheapest binary assignment respecting queueing
    capacity. When the nearest assignment overloads a server this is a
    generalized assignment problem, solved by branch and bound from a local
    search incumbent. With ``time_limit`` the search may stop early and the
    result carries status ``feasible``.
    """
    counts = _check_counts(instance, counts)
    graph = graph or build_graph(instance)
    lev, node = graph.vertex_level, graph.vertex_node
    lam = instance.arrival_rate.reshape(-1)
    t = instance.travel_time
    placed = np.nonzero(counts > 0)[0]
    if placed.size == 0:
        return Assignment("infeasible")
    # cost[d, k]: access time from demand d to the k-th placed vertex, inf if not covering
    cost = t[node[:, None], node[placed][None, :]].astype(float)
    cost[lev[placed][None, :] < lev[:, None]] = np.inf
    if np.any(np.all(np.isinf(cost), axis=1)):
        return Assignment("infeasible")
    nearest = np.argmin(cost, axis=1)  # first minimum, i.e. lowest vertex id
    if mode == MYOPIC:
        server = placed[nearest]
        return Assignment("optimal", server, float(lam @ t[node, node[server]]))
    if mode != NON_MYOPIC:
        raise ValueError(f"unknown mode {mode!r}")

    cap = server_capacity(instance, counts)[placed]
    if lam.sum() > cap.sum() + CAP_TOL:
        return Assignment("infeasible")
    load = np.bincount(nearest, weights=lam, minlength=len(placed))
    if np.all(load <= cap + CAP_TOL):
        server = placed[nearest]
        return Assignment("optimal", server, float(lam @ t[node, node[server]]))
    status, choice = solve_gap(lam, cost, cap, time_limit=time_limit)
    if choice is None:
        return Assignment(status)
    server = placed[choice]
    return Assignment(status, server, float(lam @ t[node, node[server]]))


def _gap_local_search(w, cost, cap, choice) -> np.ndarray:
    """Improving shift and swap moves until none is left."""
    choice = choice.copy()
    n = len(w)
    load = np.bincount(choice, weights=w, minlength=cost.shape[1])
    wc = w[:, None] * cost  # weighted cost per (item, bin)
    improved = True
    while improved:
        improved = False
        for d in np.argsort(-w, kind="stable"):
            k = choice[d]
            fits = load + w[d] <= cap + CAP_TOL
            fits[k] = False
            delta = np.where(fits, wc[d] - wc[d, k], np.inf)
            j = int(np.argmin(delta))
            if delta[j] < -1e-12:
                load[k] -= w[d]
                load[j] += w[d]
                choice[d] = j
                improved = True
        for d in range(n):
            k = choice[d]
            # swap d with e on another bin: both bins must stay within capacity
            e_bins = choice
            ok = (e_bins != k) & np.isfinite(wc[np.arange(n), k]) & np.isfinite(wc[d, e_bins])
            ok &= load[k] - w[d] + w <= cap[k] + CAP_TOL
            ok &= load[e_bins] - w + w[d] <= cap[e_bins] + CAP_TOL
            if not ok.any():
                continue
            gain = wc[d, e_bins] + wc[np.arange(n), k] - wc[d, k] - wc[np.arange(n), e_bins]
            gain = np.where(ok, gain, np.inf)
            e = int(np.argmin(gain))
            if gain[e] < -1e-12:
                j = choice[e]
                load[k] += w[e] - w[d]
                load[j] += w[d] - w[e]
                choice[d], choice[e] = j, k
                improved = True
    return choice


def _gap_construct(w, cost, cap) -> Optional[np.ndarray]:
    """Regret-ordered greedy: items with most to lose go first to their cheapest feasible bin."""
    n, m = cost.shape
    choice = np.full(n, -1)
    load = np.zeros(m)
    left = list(range(n))
    while left:
        best, best_key = None, None
        for d in left:
            c = np.where(load + w[d] <= cap + CAP_TOL, cost[d], np.inf)
            order = np.sort(c)
            if not np.isfinite(order[0]):
                return None
            regret = (order[1] - order[0]) if m > 1 else 0.0
            key = (-regret * w[d], -w[d], d)
            if best_key is None or key < best_key:
                best, best_key = d, key
        c = np.where(load + w[best] <= cap + CAP_TOL, cost[best], np.inf)
        j = int(np.argmin(c))
        choice[best] = j
        load[j] += w[best]
        left.remove(best)
    return choice


def _gap_round(w, cost, cap, frac) -> Optional[np.ndarray]:
    """Round a fractional assignment: keep integral items, place the split ones largest first."""
    choice = np.argmax(frac, axis=1)
    whole = frac.max(axis=1) >= 1 - 1e-6
    load = np.bincount(choice[whole], weights=w[whole], minlength=cost.shape[1])
    for d in sorted(np.nonzero(~whole)[0], key=lambda d: (-w[d], d)):
        ok = load + w[d] <= cap + CAP_TOL
        ok &= np.isfinite(cost[d])
        if not ok.any():
            return None
        # prefer the bin carrying most of the item, then the cheapest
        k = int(np.lexsort((cost[d], -np.where(ok, frac[d], -1.0)))[0])
        choice[d] = k
        load[k] += w[d]
    return choice


def solve_gap(
    weight: np.ndarray, cost: np.ndarray, cap: np.ndarray, time_limit: Optional[float] = None
) -> tuple[str, Optional[np.ndarray]]:
    """Minimize sum weight[d] * cost[d, choice[d]] subject to bin loads within ``cap``.

    ``cost`` is inf where an item may not use a bin. Zero-weight items go to
    their cheapest bin. Returns (status, choice) with status optimal,
    feasible (time limit hit with an incumbent), infeasible or time-limit.
    """
    from .bnb import SolverOptions, branch_and_bound

    n, m = cost.shape
    choice = np.argmin(cost, axis=1)
    active = np.nonzero(weight > 0)[0]
    w, cst = weight[active], cost[active]
    pairs = [(r, k) for r in range(len(active)) for k in range(m) if np.isfinite(cst[r, k])]
    col_of = {p: i for i, p in enumerate(pairs)}
    nd, npairs = len(active), len(pairs)
    pr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([pr[:, 0], nd + pr[:, 1]])
    cols = np.concatenate([np.arange(npairs), np.arange(npairs)])
    vals = np.concatenate([np.ones(npairs), w[pr[:, 0]]])
    model = LinearModel(
        c=w[pr[:, 0]] * cst[pr[:, 0], pr[:, 1]],
        rows=rows, cols=cols, vals=vals,
        senses=np.array(["E"] * nd + ["L"] * m), rhs=np.concatenate([np.ones(nd), cap]),
        lb=np.zeros(npairs), ub=np.ones(npairs), integer=np.ones(npairs, dtype=bool),
        row_family=np.full(nd + m, -1, dtype=np.int8),
    )

    def to_cols(assign: np.ndarray) -> np.ndarray:
        x = np.zeros(npairs)
        x[[col_of[(r, int(k))] for r, k in enumerate(assign)]] = 1.0
        return x

    calls = itertools.count()

    def rounding(x: np.ndarray) -> Optional[np.ndarray]:
        k = next(calls)
        if k >= 10 and k % 25:  # the local search dominates node time, so thin it out
            return None
        frac = np.zeros((nd, m))
        frac[pr[:, 0], pr[:, 1]] = x
        assign = _gap_round(w, cst, cap, frac)
        return None if assign is None else to_cols(_gap_local_search(w, cst, cap, assign))

    start = _gap_construct(w, cst, cap)
    incumbent_cols = None if start is None else to_cols(_gap_local_search(w, cst, cap, start))
    opts = SolverOptions(time_limit=time_limit if time_limit is not None else 1e9)
    res = branch_and_bound(model, opts, incumbent=incumbent_cols, heuristic=rounding)
    if res.x is None:
        return res.status, None
    for col in np.nonzero(res.x > 0.5)[0]:
        r, k = pairs[col]
        choice[active[r]] = k
    status = "optimal" if res.status == "optimal" else "feasible"
    return status, choice


# --------------------------------------------------------------------------
# minimum-cost flow
# --------------------------------------------------------------------------


def decompose_paths(chain: np.ndarray) -> list[tuple[int, int, int]]:
    """Split charging-arc flows of one station into (from level, to level, count) sessions.

    ``chain[g - 1]`` is the flow on arc g -> g + 1. Uses the minimum number of
    sessions, sum of the positive increments of the chain.
    """
    H = len(chain) + 1
    open_paths: list[list[int]] = []  # [start level, count]
    out = []
    prev = 0
    for g in range(1, H + 1):
        cur = int(round(chain[g - 1])) if g < H else 0
        if cur < prev:
            drop = prev - cur
            while drop:
                start, cnt = open_paths[-1]
                take = min(cnt, drop)
                out.append((start, g, take))
                drop -= take
                if take == cnt:
                    open_paths.pop()
                else:
                    open_paths[-1][1] -= take
        elif cur > prev:
            open_paths.append([g, cur - prev])
        prev = cur
    return out


def session_count(chain: np.ndarray) -> int:
    prev, total = 0, 0
    for w in chain:
        w = int(round(w))
        total += max(0, w - prev)
        prev = w
    return total


def _path_vector(graph: NodeChargeGraph, paths: ChargingPathSet, W: np.ndarray) -> np.ndarray:
    P = np.zeros(paths.count)
    H = graph.levels
    for k in range(paths.station_count):
        chain = np.array([W[graph.charging_arc_index[(k, g)]] for g in range(1, H)])
        for a, b, cnt in decompose_paths(chain):
            P[paths.index(k, a, b)] += cnt
    return P


def _ssp(graph: NodeChargeGraph, supply: np.ndarray, cap: np.ndarray) -> Optional[np.ndarray]:
    """Successive shortest augmenting paths with Dijkstra on reduced costs.

    ``supply`` is positive at sources, negative at sinks and sums to zero.
    Returns integer arc flows, or None when the demand cannot be met.
    """
    nv, m = graph.n_vertices, graph.n_arcs
    src, snk = nv, nv + 1
    n = nv + 2
    # residual graph as parallel arrays; arc e and e ^ 1 are mutual reverses
    to, rcap, cost = [], [], []
    adj: list[list[int]] = [[] for _ in range(n)]

    def add(u, v, c, w):
        adj[u].append(len(to)); to.append(v); rcap.append(c); cost.append(w)
        adj[v].append(len(to)); to.append(u); rcap.append(0.0); cost.append(-w)

    for a in range(m):
        add(int(graph.tail[a]), int(graph.head[a]), float(cap[a]), float(graph.cost[a]))
    need = 0
    for v in np.nonzero(supply)[0]:
        if supply[v] > 0:
            add(src, int(v), float(supply[v]), 0.0)
            need += int(supply[v])
        else:
            add(int(v), snk, float(-supply[v]), 0.0)
    to_a = np.array(to)
    pot = np.zeros(n)
    shipped = 0
    while shipped < need:
        dist = np.full(n, np.inf)
        prev = np.full(n, -1, dtype=np.int64)
        dist[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            du, u = heapq.heappop(heap)
            if du > dist[u]:
                continue
            for e in adj[u]:
                if rcap[e] <= 0:
                    continue
                v = to[e]
                nd = du + cost[e] + pot[u] - pot[v]
                if nd < dist[v] - 1e-12:
                    dist[v] = nd
                    prev[v] = e
                    heapq.heappush(heap, (nd, v))
        if not np.isfinite(dist[snk]):
            return None
        pot = pot + np.minimum(dist, dist[snk])
        # bottleneck along the path
        push, v = np.inf, snk
        while v != src:
            e = prev[v]
            push = min(push, rcap[e])
            v = to_a[e ^ 1]
        push = min(push, need - shipped)
        v = snk
        while v != src:
            e = prev[v]
            rcap[e] -= push
            rcap[e ^ 1] += push
            v = to_a[e ^ 1]
        shipped += int(push)
    flows = np.array([rcap[2 * a + 1] for a in range(m)])
    return np.round(flows)


def min_cost_flow(
    instance: Instance,
    counts,
    graph: Optional[NodeChargeGraph] = None,
    paths: Optional[ChargingPathSet] = None,
) -> Flow:
    """Cheapest integral relocation of the idle stock onto ``counts`` servers per vertex.

    Charging arcs are capped at the station capacity, a relaxation of the
    per-station session bound. If the resulting chain flows still need more
    sessions than a station allows, the relocation is re-solved exactly as a
    small integer program over arc and path flows.
    """
    counts = _check_counts(instance, counts)
    graph = graph or build_graph(instance)
    paths = paths or charging_paths(instance)
    stock = instance.idle_stock.reshape(-1)
    if counts.sum() != stock.sum():
        raise ValueError("placement size must equal the idle stock")
    supply = stock - counts
    cap = np.full(graph.n_arcs, np.inf)
    ch = graph.kind == CHARGING
    caps = np.array([s.capacity for s in instance.stations], dtype=float)
    cap[ch] = caps[graph.station[ch]] if ch.any() else cap[ch]
    W = _ssp(graph, supply, cap)
    if W is None:
        return Flow("infeasible")
    H = graph.levels
    over = [
        k for k in range(paths.station_count)
        if session_count([W[graph.charging_arc_index[(k, g)]] for g in range(1, H)]) > instance.stations[k].capacity
    ]
    if not over:
        P = _path_vector(graph, paths, W)
        return Flow("optimal", W, P, instance.theta * float(graph.cost @ W))
    log.debug("session bound binds at stations %s; re-solving exactly", over)
    return _exact_flow(instance, graph, paths, counts)


def flow_subsystem(
    instance: Instance,
    counts,
    graph: Optional[NodeChargeGraph] = None,
    paths: Optional[ChargingPathSet] = None,
) -> LinearModel:
    """Flow rows (big-M balance, conservation, path matching, station capacity) with Y fixed.

    Columns are the arc flows W followed by the path flows P; the objective
    is theta times the arc costs.
    """
    counts = _check_counts(instance, counts)
    graph = graph or build_graph(instance)
    paths = paths or charging_paths(instance)
    nv, na, npth = graph.n_vertices, graph.n_arcs, paths.count
    H = graph.levels
    stock = instance.idle_stock.reshape(-1)
    occupied = (counts > 0).astype(float)
    A = []  # (row list of (col, val), sense, rhs, family)
    fam = {f: k for k, f in enumerate(FAMILIES)}
    for sign, f in ((1.0, "EQ8"), (-1.0, "EQ9")):
        for v in range(nv):
            if stock[v] > 0:
                continue
            entries = [(int(a), sign) for a in graph.in_arcs[v]] + [(int(a), -sign) for a in graph.out_arcs[v]]
            A.append((entries, "L", instance.big_m * occupied[v], fam[f]))
    for v in range(nv):
        entries = [(int(a), 1.0) for a in graph.in_arcs[v]] + [(int(a), -1.0) for a in graph.out_arcs[v]]
        A.append((entries, "E", float(counts[v] - stock[v]), fam["EQ10"]))
    for k in range(paths.station_count):
        for g in range(1, H):
            entries = [(na + k * paths.per_station + q, 1.0) for q in paths.through(g)]
            entries.append((int(graph.charging_arc_index[(k, g)]), -1.0))
            A.append((entries, "E", 0.0, fam["EQ11"]))
    for k, st in enumerate(instance.stations):
        entries = [(na + k * paths.per_station + q, 1.0) for q in range(paths.per_station)]
        A.append((entries, "L", float(st.capacity), fam["EQ12"]))
    rows, cols, vals = [], [], []
    for r, (entries, *_rest) in enumerate(A):
        for col, val in entries:
            rows.append(r); cols.append(col); vals.append(val)
    n = na + npth
    c = np.zeros(n)
    c[:na] = instance.theta * graph.cost
    integer = np.zeros(n, dtype=bool)
    integer[:na] = True
    return LinearModel(
        c=c,
        rows=np.array(rows, dtype=np.int64), cols=np.array(cols, dtype=np.int64), vals=np.array(vals, dtype=float),
        senses=np.array([a[1] for a in A], dtype="<U1"), rhs=np.array([a[2] for a in A], dtype=float),
        lb=np.zeros(n), ub=np.full(n, np.inf), integer=integer,
        row_family=np.array([a[3] for a in A], dtype=np.int8),
    )


def _exact_flow(instance, graph, paths, counts) -> Flow:
    from .bnb import SolverOptions, branch_and_bound

    sub = flow_subsystem(instance, counts, graph, paths)
    B = float(instance.n_vehicles)
    # any optimal flow decomposes into at most B unit paths, so W <= B loses nothing
    ub = sub.ub.copy()
    ub[: graph.n_arcs] = B
    sub = LinearModel(sub.c, sub.rows, sub.cols, sub.vals, sub.senses, sub.rhs, sub.lb, ub,
                      sub.integer, sub.row_family)
    res = branch_and_bound(sub, SolverOptions(time_limit=300.0))
    if res.x is None:
        return Flow("infeasible")
    W = np.round(res.x[: graph.n_arcs])
    P = res.x[graph.n_arcs:]
    return Flow("optimal", W, P, instance.theta * float(graph.cost @ W), repaired=True)
