"""Problem instances for idle-vehicle rebalancing on a node-charge graph.

Nodes are 0-indexed, charge levels are 1-indexed (level 1 is the lowest
charge interval). Matrices indexed by node-charge are stored row-major with
shape ``(node_count, levels)``, so ``arrival_rate[i, h - 1]`` is the rate of
customers at node ``i`` needing level ``h`` or more.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .queueing import RhoTable, rho_table

DEFAULT_BIG_M = 10_000.0
DEFAULT_QUEUE_PARAMS = {"eta": 0.95, "b": 0}


class InstanceError(ValueError):
    """Raised when an instance violates its invariants or a file is malformed."""


@dataclass(frozen=True)
class Station:
    node: int
    capacity: int


def _matrix(name: str, value: Any, shape: tuple[int, int], dtype=float) -> np.ndarray:
    try:
        arr = np.array(value, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"{name}: not a numeric matrix ({exc})") from None
    if arr.shape != shape:
        raise InstanceError(f"{name}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InstanceError(f"{name}: entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Instance:
    node_count: int
    travel_time: np.ndarray
    levels: int
    stations: tuple[Station, ...]
    arrival_rate: np.ndarray
    idle_stock: np.ndarray
    service_rate: Optional[np.ndarray] = None
    charge_per_level: float = 0.2
    theta: float = 0.2
    max_servers: int = 3
    big_m: float = DEFAULT_BIG_M
    charging_arc_cost: float | tuple[float, ...] = 1.0
    queue_params: dict = field(default_factory=lambda: dict(DEFAULT_QUEUE_PARAMS))
    spatial_arcs: Optional[tuple[tuple[int, int], ...]] = None

    def __post_init__(self):
        n, H = int(self.node_count), int(self.levels)
        if n < 1:
            raise InstanceError("node_count: must be >= 1")
        if H < 1:
            raise InstanceError("levels: must be >= 1")
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "levels", H)

        t = _matrix("travel_time", self.travel_time, (n, n))
        if np.any(t < 0):
            raise InstanceError("travel_time: entries must be non-negative")
        if np.any(np.diag(t) != 0):
            raise InstanceError("travel_time: diagonal must be zero")
        object.__setattr__(self, "travel_time", t)

        stations = tuple(s if isinstance(s, Station) else Station(*s) for s in self.stations)
        seen = set()
        for k, s in enumerate(stations):
            if not 0 <= s.node < n:
                raise InstanceError(f"stations[{k}].node: {s.node} out of range 0..{n - 1}")
            if s.node in seen:
                raise InstanceError(f"stations[{k}].node: duplicate station node {s.node}")
            if s.capacity < 0 or int(s.capacity) != s.capacity:
                raise InstanceError(f"stations[{k}].capacity: must be a non-negative integer")
            seen.add(s.node)
        object.__setattr__(self, "stations", stations)

        lam = _matrix("arrival_rate", self.arrival_rate, (n, H))
        if np.any(lam < 0):
            raise InstanceError("arrival_rate: entries must be non-negative")
        object.__setattr__(self, "arrival_rate", lam)

        stock = _matrix("idle_stock", self.idle_stock, (n, H))
        if np.any(stock < 0) or np.any(stock != np.round(stock)):
            raise InstanceError("idle_stock: entries must be non-negative integers")
        stock = stock.astype(np.int64)
        stock.setflags(write=False)
        object.__setattr__(self, "idle_stock", stock)

        if self.service_rate is not None:
            mu = _matrix("service_rate", self.service_rate, (n, H))
            if np.any(mu < 0):
                raise InstanceError("service_rate: entries must be non-negative")
            object.__setattr__(self, "service_rate", mu)

        if self.max_servers < 1:
            raise InstanceError("max_servers: must be >= 1")
        if self.theta < 0:
            raise InstanceError("theta: must be >= 0")
        if self.big_m <= 0:
            raise InstanceError("big_m: must be > 0")

        cost = self.charging_arc_cost
        if isinstance(cost, (list, tuple, np.ndarray)):
            cost = tuple(float(c) for c in cost)
            if len(cost) != len(stations):
                raise InstanceError("charging_arc_cost: per-station list must match stations")
            if any(c < 0 for c in cost):
                raise InstanceError("charging_arc_cost: must be non-negative")
        else:
            cost = float(cost)
            if cost < 0:
                raise InstanceError("charging_arc_cost: must be non-negative")
        object.__setattr__(self, "charging_arc_cost", cost)

        if self.spatial_arcs is not None:
            arcs = tuple((int(i), int(j)) for i, j in self.spatial_arcs)
            for k, (i, j) in enumerate(arcs):
                if not (0 <= i < n and 0 <= j < n) or i == j:
                    raise InstanceError(f"spatial_arcs[{k}]: invalid arc ({i}, {j})")
            if len(set(arcs)) != len(arcs):
                raise InstanceError("spatial_arcs: duplicate arcs")
            object.__setattr__(self, "spatial_arcs", arcs)

        # Fails early on malformed queue parameters.
        self.rho_table()

    # -- derived quantities -------------------------------------------------

    @property
    def n_vehicles(self) -> int:
        """Total idle stock B."""
        return int(self.idle_stock.sum())

    @property
    def node_charges(self) -> int:
        return self.node_count * self.levels

    @property
    def origins(self) -> list[tuple[int, int]]:
        """Node-charges (node, level) holding idle vehicles, in vertex order."""
        nodes, lv = np.nonzero(self.idle_stock)
        return [(int(i), int(g) + 1) for i, g in zip(nodes, lv)]

    @property
    def station_nodes(self) -> list[int]:
        return [s.node for s in self.stations]

    def station_charge_cost(self, k: int) -> float:
        if isinstance(self.charging_arc_cost, tuple):
            return self.charging_arc_cost[k]
        return self.charging_arc_cost

    def rho_table(self) -> RhoTable:
        try:
            return rho_table(self.queue_params, self.max_servers)
        except (KeyError, TypeError, ValueError) as exc:
            raise InstanceError(f"queue_params: {exc}") from None

    def replace(self, **changes) -> "Instance":
        data = self.to_dict()
        data.update(changes)
        return Instance.from_dict(data)

    def with_capacity(self, capacity: int) -> "Instance":
        return self.replace(stations=[{"node": s.node, "capacity": int(capacity)} for s in self.stations])

    def with_service_rate(self, mu) -> "Instance":
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (self.node_count, self.levels))
        return self.replace(service_rate=mu.tolist())

    def screen_warnings(self) -> list[str]:
        """Soft validation: conditions that are legal but likely unintended."""
        out = []
        if self.charge_per_level * self.levels > 1.0 + 1e-12:
            out.append(
                f"charge_per_level * levels = {self.charge_per_level * self.levels:g} exceeds a full battery"
            )
        if not self.stations:
            stocked = np.nonzero(self.idle_stock.sum(axis=0))[0]
            top = int(stocked.max()) + 1 if stocked.size else 0
            if top < self.levels:
                out.append(
                    f"no charging stations and no stock at level >= {top + 1}; "
                    f"demand at levels {top + 1}..{self.levels} can never be covered"
                )
        if self.service_rate is not None and np.any(self.service_rate <= 0):
            out.append("service_rate has non-positive entries; non-myopic mode will reject it")
        return out

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "node_count": self.node_count,
            "travel_time": self.travel_time.tolist(),
            "levels": self.levels,
            "charge_per_level": self.charge_per_level,
            "stations": [{"node": s.node, "capacity": int(s.capacity)} for s in self.stations],
            "arrival_rate": self.arrival_rate.tolist(),
            "service_rate": None if self.service_rate is None else self.service_rate.tolist(),
            "idle_stock": self.idle_stock.tolist(),
            "theta": self.theta,
            "max_servers": self.max_servers,
            "big_m": self.big_m,
            "charging_arc_cost": (
                list(self.charging_arc_cost)
                if isinstance(self.charging_arc_cost, tuple)
                else self.charging_arc_cost
            ),
            "queue_params": dict(self.queue_params),
        }
        if self.spatial_arcs is not None:
            d["spatial_arcs"] = [list(a) for a in self.spatial_arcs]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        required = ("node_count", "travel_time", "levels", "stations", "arrival_rate", "idle_stock")
        for key in required:
            if key not in data:
                raise InstanceError(f"{key}: missing required field")
        known = {
            "node_count", "travel_time", "levels", "charge_per_level", "stations",
            "arrival_rate", "service_rate", "idle_stock", "theta", "max_servers",
            "big_m", "charging_arc_cost", "queue_params", "spatial_arcs",
        }
        unknown = set(data) - known
        if unknown:
            raise InstanceError(f"unknown field(s): {', '.join(sorted(unknown))}")
        stations = []
        for k, s in enumerate(data["stations"]):
            try:
                stations.append(Station(int(s["node"]), int(s["capacity"])))
            except (KeyError, TypeError, ValueError):
                raise InstanceError(f"stations[{k}]: expected {{node, capacity}}, got {s!r}") from None
        kwargs = {k: v for k, v in data.items() if k in known and v is not None}
        kwargs["stations"] = tuple(stations)
        if "spatial_arcs" in kwargs:
            kwargs["spatial_arcs"] = tuple(tuple(a) for a in kwargs["spatial_arcs"])
        if isinstance(kwargs.get("charging_arc_cost"), list):
            kwargs["charging_arc_cost"] = tuple(kwargs["charging_arc_cost"])
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise InstanceError("line 1: top-level JSON value must be an object")
        return cls.from_dict(data)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def load_instance(path: str | Path) -> Instance:
    path = Path(path)
    try:
        inst = Instance.from_json(path.read_text())
    except InstanceError as exc:
        raise InstanceError(f"{path}: {exc}") from None
    for msg in inst.screen_warnings():
        warnings.warn(f"{path}: {msg}", stacklevel=2)
    return inst


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(inst.to_json())


def line_travel_times(n: int, edge_length: float = 1.0) -> np.ndarray:
    """Shortest-path times on a line of ``n`` equally spaced nodes."""
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :]) * float(edge_length)


def line_arcs(n: int) -> list[tuple[int, int]]:
    """Bidirectional arcs between consecutive nodes of a line."""
    arcs = []
    for i in range(n - 1):
        arcs.append((i, i + 1))
        arcs.append((i + 1, i))
    return arcs


def stock_matrix(n: int, levels: int, vehicles: Sequence[tuple[int, int]]) -> np.ndarray:
    """Idle-stock matrix from a list of (node, level) vehicle positions."""
    y = np.zeros((n, levels), dtype=np.int64)
    for i, h in vehicles:
        y[i, h - 1] += 1
    return y
