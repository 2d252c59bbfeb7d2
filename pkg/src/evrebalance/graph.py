"""Node-charge graph: one copy of the zone network per charge level.

Vertex ``(i, h)`` is node ``i`` at charge level ``h`` and has integer id
``i * levels + (h - 1)``. Spatial arcs copy the zone network onto every
level; charging arcs climb one level at a station node.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

from .instance import Instance

SPATIAL, CHARGING = 0, 1

Vertex = tuple[int, int]


class CoverageError(ValueError):
    """Raised when an access cost is requested for a server that cannot cover the demand."""


def covers(server: Vertex, demand: Vertex) -> bool:
    """A server at (j, h) covers demand (i, g) at any node whenever h >= g."""
    return server[1] >= demand[1]


@dataclass(frozen=True, eq=False)
class NodeChargeGraph:
    node_count: int
    levels: int
    travel_time: np.ndarray
    tail: np.ndarray  # vertex id per arc
    head: np.ndarray
    cost: np.ndarray
    kind: np.ndarray  # SPATIAL or CHARGING
    station: np.ndarray  # station position for charging arcs, -1 otherwise
    station_nodes: tuple[int, ...]

    @property
    def n_vertices(self) -> int:
        return self.node_count * self.levels

    @property
    def n_arcs(self) -> int:
        return len(self.tail)

    @property
    def spatial_arc_count(self) -> int:
        return int(np.sum(self.kind == SPATIAL))

    @property
    def charging_arc_count(self) -> int:
        return int(np.sum(self.kind == CHARGING))

    def vid(self, i: int, h: int) -> int:
        return i * self.levels + (h - 1)

    def vertex(self, v: int) -> Vertex:
        return (int(v) // self.levels, int(v) % self.levels + 1)

    def vertices(self) -> list[Vertex]:
        return [self.vertex(v) for v in range(self.n_vertices)]

    def arc(self, a: int) -> tuple[Vertex, Vertex]:
        return self.vertex(self.tail[a]), self.vertex(self.head[a])

    @cached_property
    def vertex_level(self) -> np.ndarray:
        return np.arange(self.n_vertices) % self.levels + 1

    @cached_property
    def vertex_node(self) -> np.ndarray:
        return np.arange(self.n_vertices) // self.levels

    @cached_property
    def out_arcs(self) -> list[np.ndarray]:
        """Outgoing arc ids per vertex (A+)."""
        return _incidence(self.tail, self.n_vertices)

    @cached_property
    def in_arcs(self) -> list[np.ndarray]:
        """Incoming arc ids per vertex (A-)."""
        return _incidence(self.head, self.n_vertices)

    @cached_property
    def charging_arc_index(self) -> dict[tuple[int, int], int]:
        """Map (station position, lower level g) to the arc id of (j, g) -> (j, g + 1)."""
        out = {}
        for a in np.nonzero(self.kind == CHARGING)[0]:
            g = self.vertex(self.tail[a])[1]
            out[(int(self.station[a]), g)] = int(a)
        return out

    def covers(self, server: Vertex, demand: Vertex) -> bool:
        return covers(server, demand)

    def access_cost(self, demand: Vertex, server: Vertex) -> float:
        """Spatial travel time from the demand's node to the server's node."""
        if not covers(server, demand):
            raise CoverageError(f"server {server} cannot cover demand {demand}: level {server[1]} < {demand[1]}")
        return float(self.travel_time[demand[0], server[0]])


def _incidence(ends: np.ndarray, n: int) -> list[np.ndarray]:
    order = np.argsort(ends, kind="stable")
    bounds = np.searchsorted(ends[order], np.arange(n + 1))
    return [order[bounds[v]:bounds[v + 1]] for v in range(n)]


def build_graph(instance: Instance) -> NodeChargeGraph:
    """Expand the zone network of ``instance`` into its node-charge graph.

    Spatial arcs follow ``instance.spatial_arcs`` when given, else the
    complete digraph; arc order is level-major, then charging arcs by station
    and level.
    """
    n, H = instance.node_count, instance.levels
    t = instance.travel_time
    if instance.spatial_arcs is not None:
        pairs = np.array(instance.spatial_arcs, dtype=np.int64).reshape(-1, 2)
    else:
        ii, jj = np.nonzero(~np.eye(n, dtype=bool))
        pairs = np.stack([ii, jj], axis=1)
    h = np.repeat(np.arange(H), len(pairs))
    sp_tail = np.tile(pairs[:, 0], H) * H + h
    sp_head = np.tile(pairs[:, 1], H) * H + h
    sp_cost = np.tile(t[pairs[:, 0], pairs[:, 1]], H)

    ch_tail, ch_head, ch_cost, ch_station = [], [], [], []
    for k, s in enumerate(instance.stations):
        for g in range(H - 1):
            ch_tail.append(s.node * H + g)
            ch_head.append(s.node * H + g + 1)
            ch_cost.append(instance.station_charge_cost(k))
            ch_station.append(k)

    n_sp = len(sp_tail)
    tail = np.concatenate([sp_tail, np.array(ch_tail, dtype=np.int64)]).astype(np.int64)
    head = np.concatenate([sp_head, np.array(ch_head, dtype=np.int64)]).astype(np.int64)
    cost = np.concatenate([sp_cost, np.array(ch_cost, dtype=float)]).astype(float)
    kind = np.concatenate([np.full(n_sp, SPATIAL), np.full(len(ch_tail), CHARGING)]).astype(np.int8)
    station = np.concatenate([np.full(n_sp, -1), np.array(ch_station, dtype=np.int64)]).astype(np.int64)
    for arr in (tail, head, cost, kind, station):
        arr.setflags(write=False)
    return NodeChargeGraph(
        node_count=n,
        levels=H,
        travel_time=instance.travel_time,
        tail=tail,
        head=head,
        cost=cost,
        kind=kind,
        station=station,
        station_nodes=tuple(instance.station_nodes),
    )


@dataclass(frozen=True)
class ChargingPathSet:
    """Partial charging paths (g -> h, g < h) enumerated per station."""

    levels: int
    station_count: int
    paths: tuple[tuple[int, int], ...]  # shared level pairs, lexicographic

    @property
    def per_station(self) -> int:
        return len(self.paths)

    @property
    def count(self) -> int:
        return self.station_count * len(self.paths)

    def index(self, station: int, g: int, h: int) -> int:
        return station * len(self.paths) + self.paths.index((g, h))

    def traverses(self, path: tuple[int, int], g: int) -> bool:
        """Whether path (a, b) uses the charging arc from level g to g + 1."""
        a, b = path
        return a <= g < b

    def through(self, g: int) -> list[int]:
        """Positions (within a station's block) of paths using arc g -> g + 1."""
        return [k for k, p in enumerate(self.paths) if self.traverses(p, g)]

    def arcs_of(self, path: tuple[int, int]) -> list[tuple[int, int]]:
        a, b = path
        return [(g, g + 1) for g in range(a, b)]


def charging_paths(instance: Instance) -> ChargingPathSet:
    H = instance.levels
    paths = tuple(combinations(range(1, H + 1), 2))
    return ChargingPathSet(levels=H, station_count=len(instance.stations), paths=paths)
