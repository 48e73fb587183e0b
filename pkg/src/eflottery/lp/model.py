"""Sparse LP container, two-phase simplex driver and leximin solver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import AssemblyError
from . import _simplex
from ._simplex import simplex_core

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
OPT_TOL = 1e-9
FEAS_TOL = 1e-8
LEXIMIN_SLACK = 1e-8
REFACTOR_EVERY = 50

SENSES = ("<=", ">=", "=")
STATUS = {
    _simplex.OPTIMAL: "optimal",
    _simplex.INFEASIBLE: "infeasible",
    _simplex.UNBOUNDED: "unbounded",
    _simplex.ITERATION_LIMIT: "iteration_limit",
}


@dataclass(frozen=True)
class Row:
    idx: np.ndarray
    coef: np.ndarray
    sense: str
    rhs: float
    name: str = ""


@dataclass
class LinearProgram:
    """``maximize objective @ x`` over sparse rows and box bounds.

    Bounds default to ``[0, 1]``; lower bounds must be finite.
    """

    num_vars: int
    objective: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None
    rows: list = field(default_factory=list)
    sense: str = "max"
    var_names: list | None = None

    def __post_init__(self):
        n = self.num_vars
        self.objective = np.zeros(n) if self.objective is None else np.asarray(self.objective, dtype=float)
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.ones(n) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.objective.shape != (n,) or self.lower.shape != (n,) or self.upper.shape != (n,):
            raise AssemblyError("objective and bounds must have one entry per variable")
        if not np.all(np.isfinite(self.lower)):
            raise AssemblyError("lower bounds must be finite")
        if np.any(self.lower > self.upper):
            raise AssemblyError("every lower bound must not exceed its upper bound")
        if self.sense not in ("max", "min"):
            raise AssemblyError(f"unknown objective sense {self.sense!r}")

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def add_row(self, idx, coef, sense: str, rhs: float, name: str = "") -> int:
        idx = np.asarray(idx, dtype=np.int64)
        coef = np.asarray(coef, dtype=float)
        if sense not in SENSES:
            raise AssemblyError(f"unknown constraint sense {sense!r}")
        if idx.shape != coef.shape or idx.ndim != 1:
            raise AssemblyError("row indices and coefficients must be matching vectors")
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_vars):
            raise AssemblyError(f"row {name or len(self.rows)} references a variable outside 0..{self.num_vars - 1}")
        self.rows.append(Row(idx, coef, sense, float(rhs), name))
        return len(self.rows) - 1

    def add_variable(self, lower: float = 0.0, upper: float = 1.0, objective: float = 0.0, name: str | None = None) -> int:
        if not np.isfinite(lower) or lower > upper:
            raise AssemblyError("invalid bounds for new variable")
        self.objective = np.append(self.objective, objective)
        self.lower = np.append(self.lower, lower)
        self.upper = np.append(self.upper, upper)
        if self.var_names is not None:
            self.var_names.append(name or f"x{self.num_vars}")
        self.num_vars += 1
        return self.num_vars - 1

    def copy(self) -> "LinearProgram":
        return LinearProgram(
            self.num_vars,
            self.objective.copy(),
            self.lower.copy(),
            self.upper.copy(),
            list(self.rows),
            self.sense,
            None if self.var_names is None else list(self.var_names),
        )

    def dense(self) -> tuple[np.ndarray, np.ndarray, list[str]]:
        A = np.zeros((len(self.rows), self.num_vars))
        b = np.empty(len(self.rows))
        senses = []
        for r, row in enumerate(self.rows):
            np.add.at(A[r], row.idx, row.coef)
            b[r] = row.rhs
            senses.append(row.sense)
        return A, b, senses

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return np.array([row.coef @ x[row.idx] for row in self.rows])

    def max_violation(self, x: np.ndarray) -> float:
        worst = max(0.0, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0)))
        for row in self.rows:
            a = row.coef @ x[row.idx]
            if row.sense == "<=":
                worst = max(worst, a - row.rhs)
            elif row.sense == ">=":
                worst = max(worst, row.rhs - a)
            else:
                worst = max(worst, abs(a - row.rhs))
        return worst


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Two-phase bounded simplex. Never raises on infeasible/unbounded input."""
    A, b, senses = lp.dense()
    m, n = A.shape
    slack_cols = [r for r, s in enumerate(senses) if s != "="]
    ns = len(slack_cols)
    N = n + ns + m

    AT = np.zeros((N, m))
    AT[:n] = A.T
    for j, r in enumerate(slack_cols):
        AT[n + j, r] = 1.0 if senses[r] == "<=" else -1.0
    lb = np.concatenate([lp.lower, np.zeros(ns + m)])
    ub = np.concatenate([lp.upper, np.full(ns, np.inf), np.full(m, np.inf)])

    # start: structurals at lower bound, artificials absorb the residual
    resid = b - lp.lower @ A.T if m else b
    sign = np.where(resid < 0.0, -1.0, 1.0)
    AT[: n + ns] *= sign
    bs = b * sign
    AT[n + ns :] = np.eye(m)

    basis = np.arange(n + ns, N, dtype=np.int64)
    at_upper = np.zeros(N, dtype=np.bool_)
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    bland_after = 5 * (m + n)

    iterations = 0
    if m:
        c1 = np.zeros(N)
        c1[n + ns :] = 1.0
        st, x, it = simplex_core(
            AT, bs, c1, lb, ub, basis, at_upper, max_iter, bland_after, PIVOT_TOL, OPT_TOL, REFACTOR_EVERY
        )
        iterations += it
        if st != _simplex.OPTIMAL:
            return LpSolution(STATUS[st], None, None, iterations)
        infeas = float(x[n + ns :].sum())
        if infeas > 1e-9 * (1.0 + float(np.abs(b).max(initial=0.0))):
            log.debug("phase 1 ended with infeasibility %.3e", infeas)
            return LpSolution("infeasible", None, None, iterations)
        ub[n + ns :] = 0.0
        at_upper[n + ns :] = False

    c2 = np.zeros(N)
    c2[:n] = -lp.objective if lp.sense == "max" else lp.objective
    st, x, it = simplex_core(
        AT, bs, c2, lb, ub, basis, at_upper, max_iter, bland_after, PIVOT_TOL, OPT_TOL, REFACTOR_EVERY
    )
    iterations += it
    if st != _simplex.OPTIMAL:
        return LpSolution(STATUS[st], None, None, iterations)

    xs = x[:n].copy()
    xs = np.where(np.abs(xs - lp.lower) <= 1e-12, lp.lower, xs)
    xs = np.where(np.abs(xs - lp.upper) <= 1e-12, lp.upper, xs)
    xs = np.clip(xs, lp.lower, lp.upper)
    viol = lp.max_violation(xs)
    if viol > FEAS_TOL:
        log.warning("simplex solution violates constraints by %.3e", viol)
    return LpSolution("optimal", xs, float(lp.objective @ xs), iterations)


def _lower_bound(lp: LinearProgram, g: np.ndarray) -> float:
    lo = np.minimum(g * lp.lower, np.where(g != 0, g * lp.upper, 0.0))
    total = float(lo.sum())
    return total if np.isfinite(total) else -1e6


def lexi_solve(lp: LinearProgram, group_objectives) -> LpSolution:
    """Leximin over ``group_objectives``: raise the smallest, freeze, repeat.

    A group is frozen at the attained level once no solution keeping every
    other active group at that level can push it higher.
    """
    G = np.atleast_2d(np.asarray(group_objectives, dtype=float))
    if G.shape[1] != lp.num_vars:
        raise AssemblyError("group objective dimension does not match the LP")
    base = lp.copy()
    active = list(range(G.shape[0]))
    frozen: dict[int, float] = {}
    iterations = 0
    t_lo = min(_lower_bound(lp, g) for g in G) - 1.0

    while active:
        stage = base.copy()
        stage.sense = "max"
        stage.objective = np.zeros(stage.num_vars)
        t = stage.add_variable(lower=t_lo, upper=np.inf, objective=1.0)
        for j in active:
            nz = np.nonzero(G[j])[0]
            stage.add_row(np.append(nz, t), np.append(G[j, nz], -1.0), ">=", 0.0, f"lexi_min_{j}")
        sol = solve_lp(stage)
        iterations += sol.iterations
        if not sol.optimal:
            return LpSolution(sol.status, None, None, iterations)
        level = sol.x[t]

        floor = base.copy()
        for j in active:
            nz = np.nonzero(G[j])[0]
            floor.add_row(nz, G[j, nz], ">=", level - LEXIMIN_SLACK, f"lexi_floor_{j}")
        newly = []
        for j in active:
            probe = floor.copy()
            probe.sense = "max"
            probe.objective = G[j].copy()
            ps = solve_lp(probe)
            iterations += ps.iterations
            if not ps.optimal or ps.objective <= level + LEXIMIN_SLACK:
                newly.append(j)
        if not newly:
            # numerical stalemate: freeze the group that sits lowest at the max-min solution
            vals = [G[j] @ sol.x[: lp.num_vars] for j in active]
            newly = [active[int(np.argmin(vals))]]
        for j in newly:
            frozen[j] = level
            nz = np.nonzero(G[j])[0]
            base.add_row(nz, G[j, nz], ">=", level - LEXIMIN_SLACK, f"lexi_frozen_{j}")
            active.remove(j)
        log.debug("leximin stage froze %s at %.12g", newly, level)

    final = base.copy()
    final.sense = "max"
    final.objective = G.sum(axis=0)
    sol = solve_lp(final)
    iterations += sol.iterations
    if not sol.optimal:
        return LpSolution(sol.status, None, None, iterations)
    return LpSolution("optimal", sol.x, float(lp.objective @ sol.x), iterations)
