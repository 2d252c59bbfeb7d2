"""Mixed-integer program for queueing-constrained rebalancing.

Columns are laid out in four blocks::

    X[d, s]   assignment of demand vertex d to server vertex s   (nv * nv, binary)
    Y[v, m]   m-th server placed at vertex v                     (nv * C, binary)
    W[a]      vehicle flow on graph arc a                        (arcs, integer)
    P[k, p]   flow on charging path p at station k               (stations * paths, continuous)

Rows are grouped by family, in this order:

    EQ2   each demand is assigned to one covering server          (per vertex)
    EQ3   no assignment to a lower charge level                  (per vertex, level >= 2)
    EQ4   m-th server only after the (m-1)-th                    (per vertex, m = 2..C)
    EQ5   queueing capacity, non-myopic mode                     (per vertex)
    EQ5R  queueing row with capacity relaxed to total demand,
          myopic mode; implied by EQ7 and never binding          (per vertex)
    EQ6   servers placed equal the idle stock                    (1)
    EQ7   assignment only to occupied vertices                   (per vertex pair)
    EQ8/9 big-M flow balance at non-origin vertices              (per non-origin vertex)
    EQ10  flow conservation into the placement                   (per vertex)
    EQ11  charging arc flow equals its covering path flows       (per charging arc)
    EQ12  path flow at a station within charger capacity         (per station)

The level-1 EQ3 row has no terms and is not emitted. Together with the
myopic EQ5R rows this reproduces the target row totals of the generator
family, ``16 N^2 + 31 N - 3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .graph import ChargingPathSet, NodeChargeGraph, build_graph, charging_paths
from .instance import Instance
from .queueing import RhoTable, capacity_coefficients

MYOPIC, NON_MYOPIC = "myopic", "non-myopic"
MODES = (MYOPIC, NON_MYOPIC)

FAMILIES = ("EQ2", "EQ3", "EQ4", "EQ5", "EQ5R", "EQ6", "EQ7", "EQ8", "EQ9", "EQ10", "EQ11", "EQ12")
_FAM = {f: k for k, f in enumerate(FAMILIES)}
# number of key fields in each family's row name
_KEY_WIDTH = {"EQ2": 2, "EQ3": 2, "EQ4": 3, "EQ5": 2, "EQ5R": 2, "EQ6": 0, "EQ7": 4,
              "EQ8": 2, "EQ9": 2, "EQ10": 2, "EQ11": 2, "EQ12": 1}

FEAS_TOL = 1e-6
INT_TOL = 1e-6


class ModelError(ValueError):
    pass


# --------------------------------------------------------------------------
# generic sparse MILP container
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearModel:
    """A MILP ``min c x  s.t.  A x (<=, =, >=) rhs,  lb <= x <= ub`` in triplet form."""

    c: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    senses: np.ndarray  # 'L', 'E' or 'G' per row
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    row_family: np.ndarray  # index into FAMILIES, -1 when unknown
    row_names: Optional[list[str]] = None
    col_names: Optional[list[str]] = None
    name: str = "MODEL"

    @property
    def n_cols(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))

    def row_name(self, r: int) -> str:
        return self.row_names[r]

    def col_name(self, k: int) -> str:
        return self.col_names[k]

    def family_counts(self) -> dict[str, int]:
        counts = np.bincount(self.row_family[self.row_family >= 0], minlength=len(FAMILIES))
        return {f: int(counts[k]) for k, f in enumerate(FAMILIES) if counts[k]}

    def rows_of(self, family: str) -> np.ndarray:
        return np.nonzero(self.row_family == _FAM[family])[0]

    def sorted_triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Triplets ordered column-major, duplicates summed, explicit zeros kept."""
        order = np.lexsort((self.rows, self.cols))
        return self.rows[order], self.cols[order], self.vals[order]


# --------------------------------------------------------------------------
# variable registry
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VariableRef:
    kind: str
    index: tuple[int, ...]
    column: int
    domain: str
    lb: float
    ub: float


@dataclass(frozen=True)
class VariableLayout:
    node_count: int
    levels: int
    max_servers: int
    n_arcs: int
    n_stations: int
    paths_per_station: int

    @property
    def nv(self) -> int:
        return self.node_count * self.levels

    @property
    def y0(self) -> int:
        return self.nv * self.nv

    @property
    def w0(self) -> int:
        return self.y0 + self.nv * self.max_servers

    @property
    def p0(self) -> int:
        return self.w0 + self.n_arcs

    @property
    def n_cols(self) -> int:
        return self.p0 + self.n_stations * self.paths_per_station

    def x(self, d: int, s: int) -> int:
        return d * self.nv + s

    def y(self, v: int, m: int) -> int:
        return self.y0 + v * self.max_servers + (m - 1)

    def w(self, a: int) -> int:
        return self.w0 + a

    def p(self, k: int, q: int) -> int:
        return self.p0 + k * self.paths_per_station + q

    def block(self, kind: str) -> slice:
        return {
            "X": slice(0, self.y0),
            "Y": slice(self.y0, self.w0),
            "W": slice(self.w0, self.p0),
            "P": slice(self.p0, self.n_cols),
        }[kind]

    def kind_of(self, col: int) -> str:
        if col < self.y0:
            return "X"
        if col < self.w0:
            return "Y"
        if col < self.p0:
            return "W"
        return "P"


# --------------------------------------------------------------------------
# the rebalancing model
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MilpModel(LinearModel):
    instance: Optional[Instance] = None
    graph: Optional[NodeChargeGraph] = None
    paths: Optional[ChargingPathSet] = None
    rho: Optional[RhoTable] = None
    layout: Optional[VariableLayout] = None
    mode: str = MYOPIC
    row_keys: Optional[np.ndarray] = None  # (n_rows, 4) int32, -1 padded

    def _v(self, v: int) -> str:
        H = self.layout.levels
        return f"{v // H}_{v % H + 1}"

    def col_name(self, k: int) -> str:
        L = self.layout
        kind = L.kind_of(k)
        if kind == "X":
            d, s = divmod(k, L.nv)
            return f"X_{self._v(d)}_{self._v(s)}"
        if kind == "Y":
            v, m = divmod(k - L.y0, L.max_servers)
            return f"Y_{self._v(v)}_{m + 1}"
        if kind == "W":
            a = k - L.w0
            return f"W_{self._v(self.graph.tail[a])}_{self._v(self.graph.head[a])}"
        k2, q = divmod(k - L.p0, L.paths_per_station)
        g, h = self.paths.paths[q]
        return f"P_{self.instance.stations[k2].node}_{g}_{h}"

    def row_name(self, r: int) -> str:
        fam = FAMILIES[self.row_family[r]]
        keys = self.row_keys[r, : _KEY_WIDTH[fam]]
        return "_".join([fam, *map(str, keys)])

    def variable(self, col: int) -> VariableRef:
        L = self.layout
        kind = L.kind_of(col)
        if kind == "X":
            d, s = divmod(col, L.nv)
            idx = (*self.graph.vertex(d), *self.graph.vertex(s))
        elif kind == "Y":
            v, m = divmod(col - L.y0, L.max_servers)
            idx = (*self.graph.vertex(v), m + 1)
        elif kind == "W":
            idx = (col - L.w0,)
        else:
            k2, q = divmod(col - L.p0, L.paths_per_station)
            idx = (k2, *self.paths.paths[q])
        domain = {"X": "binary", "Y": "binary", "W": "integer", "P": "continuous"}[kind]
        return VariableRef(kind, idx, col, domain, float(self.lb[col]), float(self.ub[col]))

    def kind_counts(self) -> dict[str, int]:
        L = self.layout
        return {k: L.block(k).stop - L.block(k).start for k in "XYWP"}

    def summary(self) -> str:
        lines = [
            f"mode: {self.mode}",
            f"nodes: {self.layout.node_count}  levels: {self.layout.levels}  "
            f"node-charges: {self.layout.nv}  arcs: {self.layout.n_arcs}",
            f"variables: {self.n_cols}",
        ]
        for k, n in self.kind_counts().items():
            lines.append(f"  {k:<5}{n:>12}")
        lines.append(f"constraints: {self.n_rows}")
        for f, n in self.family_counts().items():
            lines.append(f"  {f:<5}{n:>12}")
        lines.append(f"nonzeros: {len(self.vals)}")
        return "\n".join(lines)


class _Rows:
    """Accumulates row blocks family by family."""

    def __init__(self):
        self.n = 0
        self.parts = []  # (rows, cols, vals)
        self.senses, self.rhs, self.fam, self.keys = [], [], [], []

    def block(self, family: str, count: int, sense: str, rhs, keys) -> int:
        start = self.n
        self.n += count
        self.senses.append(np.full(count, sense))
        self.rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (count,)))
        self.fam.append(np.full(count, _FAM[family], dtype=np.int8))
        k = np.full((count, 4), -1, dtype=np.int32)
        keys = np.asarray(keys, dtype=np.int32)
        if count and keys.size:
            keys = keys.reshape(count, -1)
            k[:, : keys.shape[1]] = keys
        self.keys.append(k)
        return start

    def add(self, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), rows.shape)
        keep = vals != 0
        self.parts.append((rows[keep], cols[keep], vals[keep]))


def assemble(
    instance: Instance,
    graph: Optional[NodeChargeGraph] = None,
    paths: Optional[ChargingPathSet] = None,
    rho: Optional[RhoTable] = None,
    mode: str = MYOPIC,
) -> MilpModel:
    """Build the full MILP for ``instance`` in the given mode."""
    if mode not in MODES:
        raise ModelError(f"mode must be one of {MODES}, got {mode!r}")
    graph = graph or build_graph(instance)
    paths = paths or charging_paths(instance)
    rho = rho or instance.rho_table()
    if graph.node_count != instance.node_count or graph.levels != instance.levels:
        raise ModelError("graph does not match instance dimensions")
    if paths.levels != instance.levels or paths.station_count != len(instance.stations):
        raise ModelError("charging path set does not match instance")
    C = instance.max_servers
    if rho.max_servers < C:
        raise ModelError(f"rho table has {rho.max_servers} entries, need {C}")
    if mode == NON_MYOPIC:
        if instance.service_rate is None:
            raise ModelError("non-myopic mode needs service_rate")
        if np.any(instance.service_rate <= 0):
            raise ModelError("non-myopic mode needs service_rate > 0 at every node-charge")

    H = instance.levels
    nv = graph.n_vertices
    L = VariableLayout(instance.node_count, H, C, graph.n_arcs, paths.station_count, paths.per_station)
    lev = graph.vertex_level
    node = graph.vertex_node
    lam = instance.arrival_rate.reshape(-1)
    stock = instance.idle_stock.reshape(-1)
    B = int(stock.sum())
    vid = np.arange(nv)
    ycol = L.y0 + vid * C  # column of Y[v, 1]

    R = _Rows()
    vkeys = np.stack([node, lev], axis=1)

    # EQ2
    r0 = R.block("EQ2", nv, "E", 1.0, vkeys)
    d, s = np.nonzero(lev[None, :] >= lev[:, None])
    R.add(r0 + d, d * nv + s, 1.0)

    # EQ3 (only levels >= 2 have lower-level servers)
    upper = vid[lev >= 2]
    r0 = R.block("EQ3", len(upper), "E", 0.0, vkeys[upper])
    rowpos = np.full(nv, -1)
    rowpos[upper] = np.arange(len(upper))
    d, s = np.nonzero(lev[None, :] < lev[:, None])
    R.add(r0 + rowpos[d], d * nv + s, 1.0)

    # EQ4
    if C > 1:
        vv, mm = np.meshgrid(vid, np.arange(2, C + 1), indexing="ij")
        vv, mm = vv.ravel(), mm.ravel()
        r0 = R.block("EQ4", len(vv), "L", 0.0, np.stack([node[vv], lev[vv], mm], axis=1))
        rr = r0 + np.arange(len(vv))
        R.add(rr, L.y0 + vv * C + (mm - 1), 1.0)
        R.add(rr, L.y0 + vv * C + (mm - 2), -1.0)

    # EQ5 / EQ5R
    demand = np.nonzero(lam > 0)[0]
    fam5 = "EQ5" if mode == NON_MYOPIC else "EQ5R"
    r0 = R.block(fam5, nv, "L", 0.0, vkeys)
    dd, ss = np.meshgrid(demand, vid, indexing="ij")
    R.add(r0 + ss.ravel(), dd.ravel() * nv + ss.ravel(), lam[dd.ravel()])
    if mode == NON_MYOPIC:
        mu = instance.service_rate.reshape(-1)
        inc = capacity_coefficients(rho.coefficients[:C], 1.0)
        for m in range(1, C + 1):
            R.add(r0 + vid, ycol + (m - 1), -mu * inc[m - 1])
    else:
        R.add(r0 + vid, ycol, -float(lam.sum()))

    # EQ6
    r0 = R.block("EQ6", 1, "E", float(B), np.zeros((1, 0)))
    R.add(np.full(nv * C, r0), np.arange(L.y0, L.w0), 1.0)

    # EQ7
    r0 = R.block(
        "EQ7", nv * nv, "L", 0.0,
        np.stack([np.repeat(node, nv), np.repeat(lev, nv), np.tile(node, nv), np.tile(lev, nv)], axis=1),
    )
    rr = r0 + np.arange(nv * nv)
    R.add(rr, np.arange(nv * nv), 1.0)
    R.add(rr, np.tile(ycol, nv), -1.0)

    # EQ8 / EQ9 at vertices without initial stock
    free = vid[stock == 0]
    rowpos = np.full(nv, -1)
    rowpos[free] = np.arange(len(free))
    a = np.arange(graph.n_arcs)
    hf, tf = rowpos[graph.head] >= 0, rowpos[graph.tail] >= 0
    for fam, sign in (("EQ8", 1.0), ("EQ9", -1.0)):
        r0 = R.block(fam, len(free), "L", 0.0, vkeys[free])
        R.add(r0 + rowpos[graph.head[hf]], L.w0 + a[hf], sign)
        R.add(r0 + rowpos[graph.tail[tf]], L.w0 + a[tf], -sign)
        R.add(r0 + np.arange(len(free)), ycol[free], -instance.big_m)

    # EQ10
    r0 = R.block("EQ10", nv, "E", -stock.astype(float), vkeys)
    R.add(r0 + graph.head, L.w0 + a, 1.0)
    R.add(r0 + graph.tail, L.w0 + a, -1.0)
    for m in range(1, C + 1):
        R.add(r0 + vid, ycol + (m - 1), -1.0)

    # EQ11 / EQ12
    S = paths.station_count
    if S and H > 1:
        keys11 = [(st.node, g) for st in instance.stations for g in range(1, H)]
        r0 = R.block("EQ11", len(keys11), "E", 0.0, keys11)
        for k in range(S):
            for g in range(1, H):
                r = r0 + k * (H - 1) + (g - 1)
                through = paths.through(g)
                R.add(np.full(len(through), r), [L.p(k, q) for q in through], 1.0)
                R.add([r], [L.w(graph.charging_arc_index[(k, g)])], -1.0)
    if S:
        r0 = R.block("EQ12", S, "L", [float(st.capacity) for st in instance.stations],
                     [(st.node,) for st in instance.stations])
        for k in range(S):
            q = np.arange(paths.per_station)
            R.add(np.full(len(q), r0 + k), L.p(k, 0) + q, 1.0)

    # objective
    c = np.zeros(L.n_cols)
    t = instance.travel_time
    c[: L.y0] = (lam[:, None] * t[node[:, None], node[None, :]]).ravel()
    c[L.w0: L.p0] = instance.theta * graph.cost

    lb = np.zeros(L.n_cols)
    ub = np.full(L.n_cols, np.inf)
    ub[: L.w0] = 1.0
    integer = np.zeros(L.n_cols, dtype=bool)
    integer[: L.p0] = True

    rows = np.concatenate([p[0] for p in R.parts]) if R.parts else np.zeros(0, np.int64)
    cols = np.concatenate([p[1] for p in R.parts]) if R.parts else np.zeros(0, np.int64)
    vals = np.concatenate([p[2] for p in R.parts]) if R.parts else np.zeros(0)
    return MilpModel(
        c=c, rows=rows, cols=cols, vals=vals,
        senses=np.concatenate(R.senses), rhs=np.concatenate(R.rhs).astype(float),
        lb=lb, ub=ub, integer=integer,
        row_family=np.concatenate(R.fam),
        name="REBALANCE",
        instance=instance, graph=graph, paths=paths, rho=rho, layout=L, mode=mode,
        row_keys=np.concatenate(R.keys),
    )


def build_model(instance: Instance, mode: str = MYOPIC) -> MilpModel:
    return assemble(instance, mode=mode)


# --------------------------------------------------------------------------
# closed-form sizes
# --------------------------------------------------------------------------


def count_variables(N: int, H: int, arc_count: int, J: int, C: int) -> int:
    """Columns of the assembled model."""
    return (N * H) ** 2 + N * H * C + arc_count + J * H * (H - 1) // 2


def count_constraints(N: int, H: int, J: int, C: int, origin_count: int) -> int:
    """Rows of the assembled model (either mode; EQ5 and EQ5R have equal size)."""
    nv = N * H
    return (
        nv                      # EQ2
        + N * (H - 1)           # EQ3
        + nv * (C - 1)          # EQ4
        + nv                    # EQ5 / EQ5R
        + 1                     # EQ6
        + nv * nv               # EQ7
        + 2 * (nv - origin_count)  # EQ8, EQ9
        + nv                    # EQ10
        + (J * (H - 1) if H > 1 else 0)  # EQ11
        + J                     # EQ12
    )


def line_arc_count(N: int, H: int, J: int) -> int:
    """Arcs of a per-level bidirectional line plus one charging chain per station."""
    return 2 * (N - 1) * H + J * (H - 1)


# --------------------------------------------------------------------------
# solutions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ViolationReport:
    by_family: dict[str, float]
    bounds: float
    integrality: float
    tolerance: float = FEAS_TOL

    @property
    def max_violation(self) -> float:
        return max([self.bounds, *self.by_family.values()], default=0.0)

    @property
    def feasible(self) -> bool:
        return self.max_violation <= self.tolerance and self.integrality <= self.tolerance

    def lines(self) -> list[str]:
        out = [f"{f:<5} {v:.3g}" for f, v in self.by_family.items()]
        out.append(f"bounds {self.bounds:.3g}")
        out.append(f"integrality {self.integrality:.3g}")
        return out


def check_solution(model: LinearModel, values: np.ndarray, tolerance: float = FEAS_TOL) -> ViolationReport:
    """Per-family maximum constraint violation of ``values``; never raises on infeasibility."""
    x = np.asarray(values, dtype=float)
    ax = model.matrix @ x
    diff = ax - model.rhs
    viol = np.where(model.senses == "L", np.maximum(diff, 0.0),
                    np.where(model.senses == "G", np.maximum(-diff, 0.0), np.abs(diff)))
    by_family = {}
    for k, f in enumerate(FAMILIES):
        sel = model.row_family == k
        if np.any(sel):
            by_family[f] = float(viol[sel].max())
    bounds = float(max(np.max(model.lb - x, initial=0.0), np.max(x - model.ub, initial=0.0), 0.0))
    xi = x[model.integer]
    integrality = float(np.max(np.abs(xi - np.round(xi)), initial=0.0))
    return ViolationReport(by_family, bounds, integrality, tolerance)


def evaluate_objective(instance: Instance, values: np.ndarray, graph: Optional[NodeChargeGraph] = None) -> float:
    """Access cost plus weighted rebalancing cost, computed from the instance data."""
    graph = graph or build_graph(instance)
    nv = graph.n_vertices
    x = np.asarray(values, dtype=float)
    X = x[: nv * nv].reshape(nv, nv)
    lam = instance.arrival_rate.reshape(-1)
    node = graph.vertex_node
    access = float(np.sum(lam[:, None] * instance.travel_time[node[:, None], node[None, :]] * X))
    w0 = nv * nv + nv * instance.max_servers
    W = x[w0: w0 + graph.n_arcs]
    return access + instance.theta * float(graph.cost @ W)


STATUSES = ("optimal", "feasible", "infeasible", "time-limit", "unbounded")


@dataclass(frozen=True, eq=False)
class Solution:
    status: str
    objective: float = float("nan")
    values: Optional[np.ndarray] = None
    violations: Optional[ViolationReport] = None
    bound: float = float("nan")
    gap: float = float("nan")
    nodes: int = 0
    wall_seconds: float = 0.0
    method: str = ""
    messages: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status in ("optimal", "feasible") or (self.status == "time-limit" and self.values is not None)

    def __eq__(self, other):
        if not isinstance(other, Solution):
            return NotImplemented
        same_vals = (self.values is None and other.values is None) or (
            self.values is not None and other.values is not None and np.array_equal(self.values, other.values)
        )
        return self.status == other.status and same_vals and (
            self.objective == other.objective
            or (np.isnan(self.objective) and np.isnan(other.objective))
        )

    __hash__ = None


def placement_counts(model: MilpModel, values: np.ndarray) -> np.ndarray:
    """Servers per vertex (sum over m of Y)."""
    L = model.layout
    Y = np.asarray(values)[L.block("Y")].reshape(L.nv, L.max_servers)
    return Y.sum(axis=1)


def assignment_of(model: MilpModel, values: np.ndarray) -> np.ndarray:
    """Server vertex chosen by each demand vertex (argmax over the X row)."""
    L = model.layout
    X = np.asarray(values)[L.block("X")].reshape(L.nv, L.nv)
    return X.argmax(axis=1)


def compose_values(
    model: MilpModel,
    assignment: Sequence[int],
    counts: Sequence[int],
    flow: Sequence[float],
    path_flow: Sequence[float],
) -> np.ndarray:
    """Full column vector from a server placement and its subproblem solutions."""
    L = model.layout
    x = np.zeros(L.n_cols)
    assignment = np.asarray(assignment, dtype=np.int64)
    x[np.arange(L.nv) * L.nv + assignment] = 1.0
    counts = np.asarray(counts, dtype=np.int64)
    for v in np.nonzero(counts)[0]:
        for m in range(1, int(counts[v]) + 1):
            x[L.y(int(v), m)] = 1.0
    x[L.block("W")] = flow
    x[L.block("P")] = path_flow
    return x


def finalize(model: MilpModel, values: np.ndarray, status: str, **kw) -> Solution:
    """Attach objective and violation report to raw column values."""
    values = np.asarray(values, dtype=float)
    report = check_solution(model, values)
    obj = float(model.c @ values)
    return Solution(status=status, objective=obj, values=values, violations=report, **kw)
