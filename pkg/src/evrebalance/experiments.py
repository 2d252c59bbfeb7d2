"""Parameter sweeps over station capacity and service rate.

Each sweep point is an independent solve run in a bounded process pool.
Both sweep kinds relax the model as the value grows (more charging
capacity, more queueing capacity), so a solution found at one point stays
feasible at every larger value. Points that stop at the time limit adopt
such a solution when it is better than their own incumbent, after checking
it against their own model.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bnb import SolverOptions
from .instance import Instance
from .model import MODES, assemble, check_solution
from .solver import solve

log = logging.getLogger(__name__)

KINDS = ("station-capacity", "service-rate")
_ALIASES = {"capacity": "station-capacity", "mu": "service-rate"}
CSV_COLUMNS = ("param_value", "mode", "status", "Z", "wall_seconds", "gap")


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    values: tuple[float, ...]
    base: Instance
    mode: str = "myopic"
    method: str = "exact"
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown sweep kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("sweep needs at least one value")
        d = np.diff(values)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sweep values must be strictly monotone")
        if kind == "station-capacity" and any(v != int(v) or v < 0 for v in values):
            raise ValueError("station capacities must be non-negative integers")
        if kind == "service-rate" and any(v <= 0 for v in values):
            raise ValueError("service rates must be positive")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "values", values)

    def instance_at(self, value: float) -> Instance:
        if self.kind == "station-capacity":
            return self.base.with_capacity(int(value))
        return self.base.with_service_rate(value)


@dataclass(frozen=True)
class SweepPoint:
    param_value: float
    mode: str
    status: str
    Z: float
    wall_seconds: float
    gap: float
    values: Optional[np.ndarray] = None
    bound: float = math.nan
    note: str = ""

    @property
    def feasible(self) -> bool:
        return self.values is not None

    def row(self) -> dict:
        z = f"{self.Z:.6f}" if self.feasible else "NF"
        gap = f"{self.gap:.6g}" if self.feasible and math.isfinite(self.gap) else ""
        return {
            "param_value": f"{self.param_value:g}",
            "mode": self.mode,
            "status": self.status if self.feasible else "NF",
            "Z": z,
            "wall_seconds": f"{self.wall_seconds:.3f}",
            "gap": gap,
        }


def _solve_point(spec: SweepSpec, value: float) -> SweepPoint:
    inst = spec.instance_at(value)
    sol = solve(inst, spec.mode, spec.method, spec.options)
    gap = sol.gap if sol.status != "optimal" else 0.0
    return SweepPoint(value, spec.mode, sol.status, sol.objective, sol.wall_seconds, gap,
                      sol.values if sol.feasible else None, sol.bound)


def _carry_over(spec: SweepSpec, points: list[SweepPoint]) -> list[SweepPoint]:
    """Let unproven points adopt a better solution from a more constrained point."""
    order = np.argsort(spec.values)  # ascending value = increasingly relaxed
    out = list(points)
    best: Optional[SweepPoint] = None
    for i in order:
        p = out[i]
        if best is not None and p.status != "optimal" and (not p.feasible or best.Z < p.Z - 1e-9):
            model = assemble(spec.instance_at(p.param_value), mode=spec.mode)
            if check_solution(model, best.values).feasible:
                z = float(model.c @ best.values)
                note = f"adopted solution from value {best.param_value:g}"
                log.info("sweep value %g: %s (Z %.6f)", p.param_value, note, z)
                status = p.status if p.feasible else "time-limit"
                gap = abs(z - p.bound) / max(1.0, abs(z)) if math.isfinite(p.bound) else math.inf
                out[i] = SweepPoint(p.param_value, p.mode, status, z, p.wall_seconds, gap, best.values,
                                    p.bound, note)
                p = out[i]
        if p.feasible and (best is None or p.Z < best.Z):
            best = p
    return out


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepPoint]:
    """Solve every sweep point; results follow the order of ``spec.values``."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    t0 = time.perf_counter()
    if workers == 1:
        points = [_solve_point(spec, v) for v in spec.values]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(spec.values))) as pool:
            futures = [pool.submit(_solve_point, spec, v) for v in spec.values]
            points = [f.result() for f in futures]
    if spec.method == "exact":
        points = _carry_over(spec, points)
    log.info("sweep of %d points took %.1fs", len(points), time.perf_counter() - t0)
    return points


def sweep_csv(points: Sequence[SweepPoint]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for p in points:
        writer.writerow(p.row())
    return buf.getvalue()
