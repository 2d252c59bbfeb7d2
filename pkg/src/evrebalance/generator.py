"""Seeded instance generators.

All randomness goes through ``numpy.random.Generator(PCG64(seed))`` so the
same seed gives byte-identical instance files on any platform.

The scalability family lays nodes on a line: every level carries
bidirectional arcs between consecutive nodes (``8N - 8`` spatial arcs for
four levels) and each of the four stations adds a three-arc charging chain,
``8N + 4`` arcs in all. With ``(NH)^2 + NHC + |arcs| + |J| H(H-1)/2``
columns this is the only arc count consistent with the target totals
``16N^2 + 20N + 28``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .instance import Instance, Station, line_arcs, line_travel_times, stock_matrix

REFERENCE_RHO = (0.2236, 0.6416, 1.1576)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def default_seed() -> int:
    return int(os.environ.get("REBALANCE_SEED", "0"))


def station_nodes(n: int, count: int) -> list[int]:
    """Evenly spaced station nodes, ceil((2k - 1) n / 2count) in 1-based numbering."""
    return [math.ceil((2 * k - 1) * n / (2 * count)) - 1 for k in range(1, count + 1)]


@dataclass
class GeneratorConfig:
    n_nodes: int
    levels: int = 4
    n_vehicles: int = 10
    n_stations: int = 4
    station_capacity: int = 4
    theta: float = 0.2
    max_servers: int = 3
    big_m: float = 10_000.0
    rho: tuple[float, ...] = REFERENCE_RHO
    demand_high: float = 1.0
    mu: Optional[float] = None  # uniform service rate; defaults to 1.0 * n_nodes
    mu_policy: str = "uniform"  # or "random": U[0.5, 1.5] * mu per node-charge
    edge_length: float = 1.0
    charging_cost: float = 1.0
    charge_per_level: float = 0.2
    seed: int = field(default_factory=default_seed)

    def __post_init__(self):
        if self.n_nodes < self.n_stations:
            raise ValueError(f"n_nodes={self.n_nodes} < n_stations={self.n_stations}")
        if self.n_vehicles > self.n_nodes * self.levels:
            raise ValueError("more vehicles than node-charges")
        if self.mu_policy not in ("uniform", "random"):
            raise ValueError(f"unknown mu_policy {self.mu_policy!r}")


def generate_instance(config: GeneratorConfig) -> Instance:
    rng = make_rng(config.seed)
    n, H = config.n_nodes, config.levels
    lam = rng.random((n, H)) * config.demand_high
    cells = np.sort(rng.choice(n * H, size=config.n_vehicles, replace=False))
    stock = np.zeros(n * H, dtype=np.int64)
    stock[cells] = 1
    mu = float(config.mu if config.mu is not None else 1.0 * n)
    if config.mu_policy == "uniform":
        service = np.full((n, H), mu)
    else:
        service = mu * rng.uniform(0.5, 1.5, size=(n, H))
    return Instance(
        node_count=n,
        travel_time=line_travel_times(n, config.edge_length),
        levels=H,
        charge_per_level=config.charge_per_level,
        stations=tuple(Station(j, config.station_capacity) for j in station_nodes(n, config.n_stations)),
        arrival_rate=lam,
        service_rate=service,
        idle_stock=stock.reshape(n, H),
        theta=config.theta,
        max_servers=config.max_servers,
        big_m=config.big_m,
        charging_arc_cost=config.charging_cost,
        queue_params={"rho": list(config.rho)},
        spatial_arcs=tuple(line_arcs(n)),
    )


def illustrative_instance(capacity: int = 3, seed: int = 0, demand_high: float = 5.0) -> Instance:
    """Six aligned nodes, four levels, stations at the 2nd and 6th node, three vehicles.

    Vehicles start at node-charges 3, 7 and 14 in level-major 1-based
    numbering, i.e. (node 3, level 1), (node 1, level 2), (node 2, level 3).
    Arrival rates are drawn uniformly from [0, demand_high] and rounded to
    one decimal.
    """
    n, H = 6, 4
    rng = make_rng(seed)
    lam = np.round(rng.random((n, H)) * demand_high, 1)

    def nc(k):  # level-major 1-based node-charge -> (node, level)
        return ((k - 1) % n, (k - 1) // n + 1)

    return Instance(
        node_count=n,
        travel_time=line_travel_times(n),
        levels=H,
        stations=(Station(1, capacity), Station(5, capacity)),
        arrival_rate=lam,
        service_rate=np.full((n, H), float(n)),
        idle_stock=stock_matrix(n, H, [nc(3), nc(7), nc(14)]),
        theta=0.2,
        max_servers=3,
        charging_arc_cost=1.0,
        queue_params={"rho": list(REFERENCE_RHO)},
        spatial_arcs=tuple(line_arcs(n)),
    )


def five_node_instance(vehicles=((4, 1), (1, 3)), capacity: int = 1, demand: Optional[np.ndarray] = None) -> Instance:
    """Five nodes on a line, stations at the 1st and 3rd node, four levels."""
    n, H = 5, 4
    return Instance(
        node_count=n,
        travel_time=line_travel_times(n),
        levels=H,
        stations=(Station(0, capacity), Station(2, capacity)),
        arrival_rate=np.zeros((n, H)) if demand is None else demand,
        idle_stock=stock_matrix(n, H, vehicles),
        spatial_arcs=tuple(line_arcs(n)),
    )


def tiny_instance(seed: int, max_nodes: int = 4, max_levels: int = 2, max_vehicles: int = 2,
                  max_servers: int = 2) -> Instance:
    """Small random instance for exhaustive cross-checks (complete topology)."""
    rng = make_rng(seed)
    n = int(rng.integers(1, max_nodes + 1))
    H = int(rng.integers(1, max_levels + 1))
    B = int(rng.integers(1, min(max_vehicles, n * H) + 1))
    C = int(rng.integers(1, max_servers + 1))
    pts = rng.integers(0, 10, size=n)
    t = np.abs(pts[:, None] - pts[None, :]).astype(float) + (1.0 - np.eye(n))
    n_st = int(rng.integers(0, n + 1))
    st_nodes = sorted(rng.choice(n, size=n_st, replace=False).tolist())
    stations = tuple(Station(int(j), int(rng.integers(0, 3))) for j in st_nodes)
    lam = np.round(rng.random((n, H)) * 3.0, 2)
    lam[rng.random((n, H)) < 0.2] = 0.0
    cells = rng.choice(n * H, size=B, replace=True)
    stock = np.bincount(cells, minlength=n * H).reshape(n, H)
    mu = np.round(rng.uniform(6.0, 24.0, size=(n, H)), 2)
    return Instance(
        node_count=n,
        travel_time=t,
        levels=H,
        stations=stations,
        arrival_rate=lam,
        service_rate=mu,
        idle_stock=stock,
        theta=float(np.round(rng.uniform(0.1, 1.0), 2)),
        max_servers=C,
        charging_arc_cost=float(np.round(rng.uniform(0.5, 3.0), 2)),
        queue_params={"eta": 0.95, "b": 0},
    )


def generator_counts(n_nodes: int, config: Optional[GeneratorConfig] = None) -> tuple[int, int]:
    """(variables, constraints) of the myopic model for a generator instance, without assembling it."""
    from .model import count_constraints, count_variables, line_arc_count

    cfg = config or GeneratorConfig(max(n_nodes, 4), seed=0)
    H, J, C = cfg.levels, cfg.n_stations, cfg.max_servers
    arcs = line_arc_count(n_nodes, H, J)
    # vehicles sit on distinct node-charges, so every vehicle is its own origin
    return (count_variables(n_nodes, H, arcs, J, C),
            count_constraints(n_nodes, H, J, C, cfg.n_vehicles))
