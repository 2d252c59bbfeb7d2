"""Linear-programming relaxations.

Two engines share one result type:

``simplex``
    dense bounded-variable revised simplex (two phases, explicit basis
    inverse with periodic refactorization). Dantzig pricing; after
    ``STALL_PIVOTS`` consecutive degenerate pivots it switches to Bland's
    rule for the rest of the phase, which rules out cycling.
``highs``
    scipy's HiGHS interface, used for models too large for a dense basis.

``auto`` picks ``simplex`` while the dense working set stays small.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

log = logging.getLogger(__name__)

STALL_PIVOTS = 1000
REFACTOR_EVERY = 64
DENSE_LIMIT = 2_000  # rows * (cols + rows); HiGHS wins beyond this

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REL_PIVOT_TOL = 1e-7  # entries below this fraction of the column max are treated as zero
RESIDUAL_TOL = 1e-6  # accepted primal residual of a dense-simplex optimum


@dataclass(frozen=True, eq=False)
class LinearProgram:
    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @classmethod
    def from_model(cls, model) -> "LinearProgram":
        return cls(model.c, model.matrix, model.senses, model.rhs, model.lb, model.ub)

    @classmethod
    def from_arrays(cls, c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lb=None, ub=None) -> "LinearProgram":
        c = np.asarray(c, dtype=float)
        n = len(c)
        blocks, senses, rhs = [], [], []
        if A_ub is not None:
            blocks.append(sp.csr_matrix(np.atleast_2d(A_ub), shape=(len(b_ub), n)))
            senses += ["L"] * len(b_ub)
            rhs += list(b_ub)
        if A_eq is not None:
            blocks.append(sp.csr_matrix(np.atleast_2d(A_eq), shape=(len(b_eq), n)))
            senses += ["E"] * len(b_eq)
            rhs += list(b_eq)
        A = sp.vstack(blocks, format="csr") if blocks else sp.csr_matrix((0, n))
        lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        return cls(c, A, np.array(senses, dtype="<U1"), np.asarray(rhs, dtype=float), lb, ub)


@dataclass(frozen=True, eq=False)
class LpResult:
    status: str  # optimal, infeasible, unbounded, time-limit, error
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    duals: Optional[np.ndarray] = None  # d objective / d rhs, one per row
    reduced_costs: Optional[np.ndarray] = None
    iterations: int = 0
    engine: str = ""
    seconds: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def primal_residual(lp: LinearProgram, x: np.ndarray) -> float:
    diff = lp.A @ x - lp.rhs
    row = np.where(lp.senses == "L", np.maximum(diff, 0), np.where(lp.senses == "G", np.maximum(-diff, 0), np.abs(diff)))
    bnd = np.maximum(np.maximum(lp.lb - x, x - lp.ub), 0)
    return float(max(row.max(initial=0.0), bnd.max(initial=0.0)))


def complementary_slackness(lp: LinearProgram, res: LpResult) -> float:
    """Largest |dual * slack| over rows and |reduced cost * distance to nearest bound| over columns."""
    x, y = res.x, res.duals
    slack = lp.rhs - lp.A @ x
    row = np.abs(y * slack)
    d = lp.c - lp.A.T @ y
    gap = np.minimum(x - lp.lb, lp.ub - x)
    col = np.abs(d) * np.where(np.isfinite(gap), gap, np.abs(x))
    return float(max(row.max(initial=0.0), col.max(initial=0.0)))


def solve_lp(lp, lb=None, ub=None, engine: str = "auto", time_limit: Optional[float] = None) -> LpResult:
    """Solve the continuous relaxation of ``lp`` (a LinearProgram or model), optionally with overridden bounds."""
    if not isinstance(lp, LinearProgram):
        lp = LinearProgram.from_model(lp)
    if lb is not None or ub is not None:
        lp = LinearProgram(lp.c, lp.A, lp.senses, lp.rhs,
                           lp.lb if lb is None else np.asarray(lb, float),
                           lp.ub if ub is None else np.asarray(ub, float))
    if np.any(lp.lb > lp.ub):
        return LpResult("infeasible", engine=engine)
    m, n = lp.shape
    if engine == "auto":
        dense_ok = np.all(np.isfinite(lp.lb)) and m * (n + m) <= DENSE_LIMIT
        engine = "simplex" if dense_ok else "highs"
    t0 = time.perf_counter()
    if engine == "simplex":
        try:
            res = _BoundedSimplex(lp).solve()
            trouble = res.status == "error" or (res.status == "optimal" and primal_residual(lp, res.x) > RESIDUAL_TOL)
        except np.linalg.LinAlgError:
            res, trouble = None, True
        if trouble:
            # ill-conditioned basis (big-M rows); the sparse solver is more robust
            log.info("dense simplex lost accuracy; re-solving with HiGHS")
            res = _solve_highs(lp, time_limit)
            engine = "highs"
    elif engine == "highs":
        res = _solve_highs(lp, time_limit)
    else:
        raise ValueError(f"unknown LP engine {engine!r}")
    return LpResult(res.status, res.x, res.objective, res.duals, res.reduced_costs,
                    res.iterations, engine, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# HiGHS
# --------------------------------------------------------------------------


def _solve_highs(lp: LinearProgram, time_limit: Optional[float]) -> LpResult:
    A = lp.A.tocsr()
    le = np.nonzero(lp.senses == "L")[0]
    ge = np.nonzero(lp.senses == "G")[0]
    eq = np.nonzero(lp.senses == "E")[0]
    ub_rows = np.concatenate([le, ge])
    sign = np.concatenate([np.ones(len(le)), -np.ones(len(ge))])
    A_ub = sp.diags(sign) @ A[ub_rows] if len(ub_rows) else None
    b_ub = sign * lp.rhs[ub_rows] if len(ub_rows) else None
    t0 = time.perf_counter()
    # presolve occasionally ends with an unknown model status; retry without it, then with IPM
    for method, presolve in (("highs-ds", True), ("highs-ds", False), ("highs-ipm", False)):
        options = {"presolve": presolve}
        if time_limit is not None:
            options["time_limit"] = float(max(time_limit - (time.perf_counter() - t0), 1e-3))
        res = linprog(
            lp.c, A_ub=A_ub, b_ub=b_ub,
            A_eq=A[eq] if len(eq) else None, b_eq=lp.rhs[eq] if len(eq) else None,
            bounds=np.stack([lp.lb, lp.ub], axis=1), method=method, options=options,
        )
        status = {0: "optimal", 1: "time-limit", 2: "infeasible", 3: "unbounded"}.get(res.status, "error")
        if status != "error":
            break
    if status != "optimal":
        return LpResult(status, iterations=int(getattr(res, "nit", 0) or 0), engine="highs")
    duals = np.zeros(len(lp.rhs))
    if len(ub_rows):
        duals[ub_rows] = sign * res.ineqlin.marginals
    if len(eq):
        duals[eq] = res.eqlin.marginals
    x = np.clip(res.x, lp.lb, lp.ub)
    rc = lp.c - lp.A.T @ duals
    return LpResult("optimal", x, float(lp.c @ x), duals, rc, int(res.nit), "highs")


# --------------------------------------------------------------------------
# dense bounded-variable simplex
# --------------------------------------------------------------------------


class _BoundedSimplex:
    def __init__(self, lp: LinearProgram):
        m, n = lp.shape
        A = lp.A.toarray()
        slack_cols = []
        for i, s in enumerate(lp.senses):
            if s == "L":
                slack_cols.append((i, 1.0))
            elif s == "G":
                slack_cols.append((i, -1.0))
        S = np.zeros((m, len(slack_cols)))
        for k, (i, sgn) in enumerate(slack_cols):
            S[i, k] = sgn
        self.lp = lp
        self.m, self.n = m, n
        self.n_struct_slack = n + len(slack_cols)
        self.A = np.hstack([A, S, np.zeros((m, m))])  # artificial block filled below
        self.lo = np.concatenate([lp.lb, np.zeros(len(slack_cols)), np.zeros(m)])
        self.hi = np.concatenate([lp.ub, np.full(len(slack_cols), np.inf), np.full(m, np.inf)])
        self.b = lp.rhs.astype(float)
        self.iterations = 0

    # state: basis (m,), at_upper (bool per column), x (values per column)
    def solve(self) -> LpResult:
        m, N = self.m, self.A.shape[1]
        art0 = self.n_struct_slack
        x = self.lo.copy()
        x[art0:] = 0.0
        r = self.b - self.A[:, :art0] @ x[:art0]
        sgn = np.where(r >= 0, 1.0, -1.0)
        self.A[:, art0:] = np.diag(sgn)
        x[art0:] = np.abs(r)
        self.x = x
        self.at_upper = np.zeros(N, dtype=bool)
        self.basis = np.arange(art0, art0 + m)
        self.is_basic = np.zeros(N, dtype=bool)
        self.is_basic[self.basis] = True
        self.Binv = np.diag(sgn)  # inverse of diag(sgn)
        self.allowed = np.ones(N, dtype=bool)

        # phase 1
        cost1 = np.zeros(N)
        cost1[art0:] = 1.0
        status = self._iterate(cost1)
        if status != "optimal":
            return LpResult("error", iterations=self.iterations, engine="simplex")
        infeas = float(self.x[art0:].sum())
        if infeas > 1e-7 * max(1.0, np.abs(self.b).max(initial=0.0)):
            return LpResult("infeasible", iterations=self.iterations, engine="simplex")
        self._expel_artificials(art0)
        self.allowed[art0:] = False
        self.hi[art0:] = 0.0
        self.x[art0:] = np.where(self.is_basic[art0:], self.x[art0:], 0.0)

        # phase 2
        cost2 = np.zeros(N)
        cost2[: self.n] = self.lp.c
        status = self._iterate(cost2)
        if status == "unbounded":
            return LpResult("unbounded", iterations=self.iterations, engine="simplex")
        if status != "optimal":
            return LpResult("error", iterations=self.iterations, engine="simplex")
        self._refactor()
        xs = np.clip(self.x[: self.n], self.lp.lb, self.lp.ub)
        duals = cost2[self.basis] @ self.Binv
        rc = self.lp.c - self.lp.A.T @ duals
        return LpResult("optimal", xs, float(self.lp.c @ xs), duals, rc, self.iterations, "simplex")

    def _refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        nonbasic = ~self.is_basic
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs

    def _iterate(self, cost: np.ndarray) -> str:
        bland = False
        stall = 0
        since_refactor = 0
        while True:
            if since_refactor >= REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.A
            cand_up = (~self.is_basic) & self.allowed & (~self.at_upper) & (d < -OPT_TOL) & (self.hi > self.lo)
            cand_dn = (~self.is_basic) & self.allowed & self.at_upper & (d > OPT_TOL)
            cand = cand_up | cand_dn
            if not cand.any():
                return "optimal"
            if bland:
                q = int(np.argmax(cand))
            else:
                score = np.where(cand, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if cand_up[q] else -1.0
            alpha = self.Binv @ self.A[:, q]
            delta = -direction * alpha  # change of x_B per unit step
            xb = self.x[self.basis]
            lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]
            tol = max(PIVOT_TOL, REL_PIVOT_TOL * float(np.abs(delta).max(initial=0.0)))
            with np.errstate(divide="ignore", invalid="ignore"):
                t_lo = np.where(delta < -tol, (xb - lo_b) / -delta, np.inf)
                t_hi = np.where(delta > tol, (hi_b - xb) / delta, np.inf)
                # Harris pass: bounds relaxed by FEAS_TOL give the longest safe step
                t_lo_h = np.where(delta < -tol, (xb - lo_b + FEAS_TOL) / -delta, np.inf)
                t_hi_h = np.where(delta > tol, (hi_b - xb + FEAS_TOL) / delta, np.inf)
            t_row = np.maximum(np.minimum(t_lo, t_hi), 0.0)
            t_flip = self.hi[q] - self.lo[q]
            t_min = t_row.min(initial=np.inf)
            if not np.isfinite(t_min) and not np.isfinite(t_flip):
                return "unbounded"
            self.iterations += 1
            if t_flip <= t_min:
                t = t_flip
                self.x[self.basis] += delta * t
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
                self.at_upper[q] = direction > 0
            else:
                if bland:
                    ties = np.nonzero(t_row <= t_min + 1e-12)[0]
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    # among rows blocking within the relaxed step, pivot on the largest entry
                    t_harris = np.minimum(t_lo_h, t_hi_h).min(initial=np.inf)
                    ties = np.nonzero(t_row <= max(t_harris, t_min + 1e-12))[0]
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                t = t_row[r]
                leaving = int(self.basis[r])
                self.x[self.basis] += delta * t
                self.x[q] += direction * t
                hit_upper = t_hi[r] <= t_lo[r]
                self.x[leaving] = self.hi[leaving] if hit_upper else self.lo[leaving]
                self.at_upper[leaving] = bool(hit_upper)
                self._pivot(r, q, alpha)
                since_refactor += 1
            if t <= 1e-12:
                stall += 1
                if stall >= STALL_PIVOTS:
                    bland = True
            else:
                stall = 0

    def _pivot(self, r: int, q: int, alpha: np.ndarray):
        leaving = self.basis[r]
        piv = alpha[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self.basis[r] = q
        self.is_basic[leaving] = False
        self.is_basic[q] = True
        self.at_upper[q] = False

    def _expel_artificials(self, art0: int):
        for r in range(self.m):
            if self.basis[r] < art0:
                continue
            row = self.Binv[r] @ self.A[:, :art0]
            row[self.is_basic[:art0]] = 0.0
            cand = np.nonzero(np.abs(row) > 1e-7)[0]
            if len(cand):
                q = int(cand[np.argmax(np.abs(row[cand]))])
                alpha = self.Binv @ self.A[:, q]
                leaving = self.basis[r]
                self.x[leaving] = 0.0
                self._pivot(r, q, alpha)
                # x_q keeps its bound value; artificial was at zero so the pivot is degenerate
                self.at_upper[q] = False
        self._refactor()
