"""Service-reliability intensity coefficients for the queueing capacity rows.

For a node-charge holding ``m`` servers, the admissible intensity rho is the
root of

    sum_{k=0}^{m-1} (m - k) m! m^b / k! * rho^-(m + b + 1 - k) = 1 / (1 - eta)

where ``eta`` is the service reliability and ``b`` the tolerated queue length.
The left side decreases strictly in rho, so any rho at or below the root keeps
the reliability target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

MAX_SERVERS = 20


@dataclass(frozen=True)
class RhoTable:
    coefficients: tuple[float, ...]
    eta: Optional[float] = None
    b: Optional[int] = None

    def __post_init__(self):
        rho = tuple(float(r) for r in self.coefficients)
        if not rho:
            raise ValueError("rho table is empty")
        if any(not math.isfinite(r) or r <= 0 for r in rho):
            raise ValueError("rho coefficients must be positive and finite")
        if any(b <= a for a, b in zip(rho, rho[1:])):
            raise ValueError("rho coefficients must be strictly increasing in the server count")
        object.__setattr__(self, "coefficients", rho)

    @property
    def max_servers(self) -> int:
        return len(self.coefficients)

    def __getitem__(self, m: int) -> float:
        """Intensity for ``m`` servers, 1-indexed."""
        if not 1 <= m <= len(self.coefficients):
            raise IndexError(m)
        return self.coefficients[m - 1]


def _check_m(m: int) -> None:
    if m < 1:
        raise ValueError("server count m must be >= 1")
    if m > MAX_SERVERS:
        raise ValueError(f"server count m > {MAX_SERVERS} is not supported")


def eq17_lhs(rho: float, m: int, b: int) -> float:
    """Left-hand side of the reliability equation at intensity ``rho``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    _check_m(m)
    if b < 0:
        raise ValueError("queue bound b must be >= 0")
    fm = math.factorial(m) * m**b
    total = 0.0
    for k in range(m):
        coef = (m - k) * fm // math.factorial(k)
        try:
            total += coef * rho ** (-(m + b + 1 - k))
        except OverflowError:
            return math.inf
    return total


def solve_rho(m: int, b: int, eta: float) -> float:
    """Largest intensity meeting reliability ``eta`` with ``m`` servers."""
    _check_m(m)
    if b < 0:
        raise ValueError("queue bound b must be >= 0")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    target = 1.0 / (1.0 - eta)
    lo, hi = 1e-9, 1.0
    while eq17_lhs(hi, m, b) >= target:
        lo, hi = hi, 2.0 * hi
    # bisect down to float resolution; 1e-10 in rho alone leaves residuals
    # far above 1e-9 when the root is small
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if eq17_lhs(mid, m, b) >= target:
            lo = mid
        else:
            hi = mid
    return lo if abs(eq17_lhs(lo, m, b) - target) <= abs(eq17_lhs(hi, m, b) - target) else hi


def solve_rho_table(max_servers: int, b: int = 0, eta: float = 0.95) -> RhoTable:
    rho = tuple(solve_rho(m, b, eta) for m in range(1, max_servers + 1))
    return RhoTable(rho, eta=eta, b=b)


def rho_table(queue_params: dict, max_servers: int) -> RhoTable:
    """Build a table from instance queue parameters: ``{"rho": [...]}`` or ``{"eta", "b"}``."""
    if "rho" in queue_params:
        rho = list(queue_params["rho"])
        if len(rho) < max_servers:
            raise ValueError(f"rho table has {len(rho)} entries, need max_servers={max_servers}")
        return RhoTable(tuple(rho[:max_servers]))
    eta = float(queue_params["eta"])
    b = int(queue_params.get("b", 0))
    return solve_rho_table(max_servers, b=b, eta=eta)


def capacity_coefficients(table: RhoTable | Sequence[float], mu: float) -> np.ndarray:
    """Per-added-server capacity increments ``mu * (rho[m] - rho[m-1])``."""
    if not isinstance(table, RhoTable):
        table = RhoTable(tuple(table))
    if mu <= 0:
        raise ValueError("service rate mu must be positive")
    rho = np.asarray(table.coefficients)
    return mu * np.diff(rho, prepend=0.0)
