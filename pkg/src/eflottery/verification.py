"""Independent checks on lotteries: fairness, feasibility and (approximate) Pareto optimality."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import dominator_search
from .errors import SizeError
from .flow import add_fairness_rows, add_flow_rows, build_flow_graph, utility_coefficients
from .lottery import Lottery, decompose
from .lp import LinearProgram, solve_lp
from .valuations import GridValues, Instance

TOL = 1e-9
STRICT_TOL = 1e-8
MAX_BRUTE_FORCE = 5_000_000

CLASSES = ("ef_lotteries", "all_lotteries", "outcomes")


@dataclass
class Check:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    witness: dict | None = None

    def to_dict(self) -> dict:
        out = {"name": self.name, "passed": self.passed, "details": self.details}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, other: "VerificationReport") -> "VerificationReport":
        self.checks.extend(other.checks)
        return self

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


# ---------------------------------------------------------------- utilities


def expected_utilities(lottery: Lottery, instance: Instance) -> tuple[np.ndarray, np.ndarray]:
    """Own expected utilities and the cross matrix ``U[i, j] = u_i(L_j)``.

    Summation is exactly rounded, so permuting the support does not change
    the result.
    """
    _check_shape(lottery, instance)
    per = instance.cross_utilities(lottery.allocations)  # (S, n, n)
    terms = lottery.probabilities[:, None, None] * per
    n = instance.n
    U = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            U[i, j] = math.fsum(terms[:, i, j])
    return np.diagonal(U).copy(), U


def _check_shape(lottery: Lottery, instance: Instance):
    if (lottery.n, lottery.m) != (instance.n, instance.m):
        raise ValueError(f"lottery is {lottery.n}x{lottery.m}, instance is {instance.n}x{instance.m}")


def check_ex_ante_ef(lottery: Lottery, instance: Instance, tol: float = TOL) -> VerificationReport:
    u, U = expected_utilities(lottery, instance)
    envy = [
        {"agent": i, "envies": j, "own": float(U[i, i]), "other": float(U[i, j])}
        for i in range(instance.n)
        for j in range(instance.n)
        if i != j and U[i, i] < U[i, j] - tol
    ]
    slack = min((U[i, i] - U[i, j] for i in range(instance.n) for j in range(instance.n) if i != j), default=0.0)
    rep = VerificationReport()
    rep.add(
        Check(
            "ex_ante_envy_free",
            not envy,
            {"utilities": u.tolist(), "cross_utilities": U.tolist(), "min_slack": float(slack)},
            {"envy_pairs": envy} if envy else None,
        )
    )
    return rep


def check_ex_ante_proportional(lottery: Lottery, instance: Instance, tol: float = TOL) -> VerificationReport:
    u, _ = expected_utilities(lottery, instance)
    shares = instance.proportional_shares()
    bad = [{"agent": i, "utility": float(u[i]), "share": float(shares[i])} for i in range(instance.n) if u[i] < shares[i] - tol]
    rep = VerificationReport()
    rep.add(Check("ex_ante_proportional", not bad, {"utilities": u.tolist(), "shares": shares.tolist()}, {"below_share": bad} if bad else None))
    return rep


def check_ex_post(lottery: Lottery, instance: Instance, which: str, tol: float = TOL) -> VerificationReport:
    """Apply an outcome predicate (``feasible``, ``envy-free``, ``proportional``) to every support outcome."""
    _check_shape(lottery, instance)
    failures = []
    if which == "feasible":
        totals = lottery.item_totals()
        for l, row in enumerate(totals):
            over = np.nonzero(row > 1.0 + tol)[0]
            if over.size:
                failures.append({"outcome": l, "items": over.tolist(), "totals": row[over].tolist()})
    elif which in ("envy-free", "proportional"):
        cross = instance.cross_utilities(lottery.allocations)
        shares = instance.proportional_shares()
        for l, U in enumerate(cross):
            for i in range(instance.n):
                if which == "envy-free":
                    for j in range(instance.n):
                        if j != i and U[i, i] < U[i, j] - tol:
                            failures.append({"outcome": l, "agent": i, "envies": j, "own": float(U[i, i]), "other": float(U[i, j])})
                elif U[i, i] < shares[i] - tol:
                    failures.append({"outcome": l, "agent": i, "utility": float(U[i, i]), "share": float(shares[i])})
    else:
        raise ValueError(f"unknown ex-post predicate {which!r}")
    rep = VerificationReport()
    rep.add(Check(f"ex_post_{which.replace('-', '_')}", not failures, {"support": lottery.support_size}, {"failures": failures} if failures else None))
    return rep


# ---------------------------------------------------------------- Pareto


def grid_outcomes(n: int, m: int, pieces: int, complete: bool = False) -> np.ndarray:
    """All outcomes on the grid as piece counts, shape ``(count, n, m)``."""
    per_item = np.indices((pieces + 1,) * n).reshape(n, -1).T
    s = per_item.sum(axis=1)
    per_item = per_item[(s == pieces) if complete else (s <= pieces)]
    count = per_item.shape[0] ** m
    if count * n * m > MAX_BRUTE_FORCE:
        raise SizeError(f"{count} grid outcomes is too many to enumerate")
    idx = np.indices((per_item.shape[0],) * m).reshape(m, -1).T
    return np.stack([per_item[idx[:, k]] for k in range(m)], axis=-1)


def check_ex_post_pareto(lottery: Lottery, instance: Instance, pieces: int | None = None, tol: float = TOL) -> VerificationReport:
    """Pareto optimality of each support outcome among all outcomes.

    Three tests per outcome: no agent holds more of an item than she needs
    for her value there; nobody gains from receiving the amount that can be
    freed without loss; and (if ``pieces`` is given) no grid outcome
    dominates it.
    """
    _check_shape(lottery, instance)
    n, m = instance.n, instance.m
    waste, pool, dom = [], [], []
    grid_utils = None
    if pieces is not None:
        outs = grid_outcomes(n, m, pieces)
        grid = GridValues.from_instance(instance, pieces)
        grid_utils = np.zeros(outs.shape[:2])
        for i in range(n):
            for k in range(m):
                grid_utils[:, i] += grid.values[i, k, outs[:, i, k]]
    for l, x in enumerate(lottery.allocations):
        u = instance.utilities(x)
        need = np.zeros((n, m))
        for i in range(n):
            for k in range(m):
                f = instance.valuations[i][k]
                xv = min(max(x[i, k], 0.0), 1.0)
                need[i, k] = f.cut(f.value(xv))
                if need[i, k] < xv - tol:
                    waste.append({"outcome": l, "agent": i, "item": k, "holds": float(xv), "needs": float(need[i, k])})
        free = np.maximum(1.0 - need.sum(axis=0), 0.0)
        for k in range(m):
            if free[k] <= tol:
                continue
            for j in range(n):
                f = instance.valuations[j][k]
                gain = f.value(min(1.0, need[j, k] + free[k])) - f.value(min(max(x[j, k], 0.0), 1.0))
                if gain > tol:
                    pool.append({"outcome": l, "item": k, "agent": j, "free_amount": float(free[k]), "gain": float(gain)})
        if grid_utils is not None:
            better = np.all(grid_utils >= u - tol, axis=1) & ((grid_utils - u).sum(axis=1) > STRICT_TOL)
            if better.any():
                o = int(np.nonzero(better)[0][0])
                dom.append({"outcome": l, "dominator": (outs[o] / pieces).tolist(), "utilities": grid_utils[o].tolist(), "was": u.tolist()})
    rep = VerificationReport()
    rep.add(Check("ex_post_non_wasteful", not waste, {}, {"failures": waste} if waste else None))
    rep.add(Check("ex_post_no_free_gain", not pool, {}, {"failures": pool} if pool else None))
    if pieces is not None:
        rep.add(Check("ex_post_grid_undominated", not dom, {"pieces": pieces}, {"failures": dom} if dom else None))
    return rep


def dominance_lp(instance: Instance, pieces: int, floor: np.ndarray, ef: bool) -> tuple[LinearProgram, np.ndarray, object]:
    """Flow LP over grid lotteries with ``u_i >= floor_i``; maximizes total utility."""
    grid = GridValues.from_instance(instance, pieces)
    graph = build_flow_graph(instance.n, instance.m, pieces)
    W = utility_coefficients(graph, grid)
    own = W[np.arange(instance.n), np.arange(instance.n)]
    lp = LinearProgram(graph.num_edges, own.sum(axis=0))
    add_flow_rows(lp, graph)
    if ef:
        add_fairness_rows(lp, W, "ef")
    for i in range(instance.n):
        nz = np.nonzero(own[i])[0]
        lp.add_row(nz, own[i, nz], ">=", float(floor[i]), f"improve_{i}")
    return lp, own, graph


def check_eps_pareto(
    lottery: Lottery,
    instance: Instance,
    epsilon: float,
    comparison_class: str = "ef_lotteries",
    pieces: int | None = None,
) -> VerificationReport:
    """Search the comparison class for an alternative giving every agent at
    least ``(1 + epsilon)`` times her utility, with positive total surplus.

    Lottery classes are searched exactly by LP over grid lotteries with
    ``pieces`` pieces per item; ``outcomes`` enumerates grid outcomes.
    """
    if comparison_class not in CLASSES:
        raise ValueError(f"comparison class must be one of {CLASSES}")
    if pieces is None:
        raise ValueError("grid comparison classes need a piece count")
    u, _ = expected_utilities(lottery, instance)
    floor = (1.0 + epsilon) * u
    details = {
        "class": comparison_class,
        "epsilon": epsilon,
        "pieces": pieces,
        "utilities": u.tolist(),
        # rounding any allocation down to the grid costs at most this much per agent
        "grid_rounding_bound": instance.m * instance.lipschitz / pieces,
    }
    witness = None
    if comparison_class == "outcomes":
        outs = grid_outcomes(instance.n, instance.m, pieces)
        alloc = outs / pieces
        utils = instance.cross_utilities(alloc)
        own = np.diagonal(utils, axis1=1, axis2=2)
        ok = np.all(own >= floor - TOL, axis=1)
        surplus = np.where(ok, (own - floor).sum(axis=1), -np.inf)
        best = int(np.argmax(surplus))
        details["best_surplus"] = float(surplus[best]) if np.isfinite(surplus[best]) else None
        if surplus[best] > STRICT_TOL:
            witness = {"lottery": Lottery.deterministic(alloc[best]).to_dict(), "utilities": own[best].tolist()}
    else:
        lp, own, graph = dominance_lp(instance, pieces, floor, comparison_class == "ef_lotteries")
        sol = solve_lp(lp)
        details["lp_status"] = sol.status
        if sol.optimal:
            surplus = float(sol.objective - floor.sum())
            details["best_surplus"] = surplus
            if surplus > STRICT_TOL:
                alt = decompose(graph, sol.x, merge=True)
                alt_u, _ = expected_utilities(alt, instance)
                witness = {"lottery": alt.to_dict(), "utilities": alt_u.tolist()}
    rep = VerificationReport()
    rep.add(Check("eps_pareto", witness is None, details, witness))
    return rep


def is_dominated_by(candidate: Lottery, lottery: Lottery, instance: Instance, epsilon: float, ef: bool = True) -> bool:
    """Re-check a dominance witness from utilities alone."""
    u, _ = expected_utilities(lottery, instance)
    v, V = expected_utilities(candidate, instance)
    floor = (1.0 + epsilon) * u
    if ef and np.any(np.diagonal(V)[:, None] < V - TOL):
        return False
    return bool(np.all(v >= floor - TOL) and (v - floor).sum() > STRICT_TOL)


def exhaustive_dominator(
    lottery: Lottery,
    instance: Instance,
    epsilon: float,
    pieces: int,
    denom: int = 20,
    ef: bool = True,
) -> tuple[bool, Lottery | None]:
    """Enumerate lotteries on at most three grid outcomes with probabilities in ``1/denom`` steps."""
    u, _ = expected_utilities(lottery, instance)
    floor = (1.0 + epsilon) * u
    outs = grid_outcomes(instance.n, instance.m, pieces) / pieces
    cross = instance.cross_utilities(outs)
    best, o, w = dominator_search(cross, floor, denom, ef, TOL)
    if not best > STRICT_TOL:
        return False, None
    keep = w > 0
    return True, Lottery(w[keep] / denom, outs[o[keep]]).merged()


# ---------------------------------------------------------------- frontier


@dataclass
class FrontierPoint:
    weights: np.ndarray
    utilities: np.ndarray
    lottery: Lottery


@dataclass
class Frontier:
    points: list
    deterministic: np.ndarray  # (count, n) utilities of complete grid outcomes
    deterministic_allocations: np.ndarray


def simplex_weights(n: int, directions: int) -> np.ndarray:
    """Evenly spaced non-negative weight vectors summing to one."""
    if directions < 1:
        raise ValueError("need at least one direction")
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        t = np.linspace(1.0, 0.0, directions) if directions > 1 else np.array([0.5])
        return np.stack([t, 1.0 - t], axis=1)
    h = 1
    while math.comb(h + n - 1, n - 1) < directions:
        h += 1
    pts = np.indices((h + 1,) * n).reshape(n, -1).T
    pts = pts[pts.sum(axis=1) == h][::-1]
    return pts / h


def frontier_sweep(instance: Instance, epsilon, directions: int, fairness: str = "ef") -> Frontier:
    from .flow import SolverConfig, solve_grid
    from .valuations import grid_pieces

    pieces = grid_pieces(epsilon)
    grid = GridValues.from_instance(instance, pieces)
    graph = build_flow_graph(instance.n, instance.m, pieces)
    points = []
    for w in simplex_weights(instance.n, directions):
        sol = solve_grid(grid, SolverConfig(epsilon, tuple(w), fairness), graph)
        lot = decompose(graph, sol.flow, merge=True)
        u, _ = expected_utilities(lot, instance)
        points.append(FrontierPoint(w, u, lot))
    outs = grid_outcomes(instance.n, instance.m, pieces, complete=True) / pieces
    det = instance.utilities(outs)
    return Frontier(points, det, outs)
