"""Query-answering adversary for two agents and two items.

Every query is answered as if all curves were the identity. Afterwards an
unprobed stretch ``[x1, x1 + eps]`` of item ``b`` above one half is used to
forge three instances that agree with everything the protocol saw:

* ``I1``: all curves linear
* ``I2``: agent 1's item-b curve climbs at slope 2 over the first half of
  the stretch and stays flat over the second half
* ``I3``: the same bend on agent 0's item-b curve

No lottery is simultaneously ``eps/16``-Pareto-undominated among envy-free
lotteries in both ``I2`` and ``I3`` while staying envy-free in ``I1``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AdversaryExhausted, ConfigError, DomainError, UnattainableValueError
from .flow import add_flow_rows, build_flow_graph, utility_coefficients
from .lottery import Lottery
from .lp import LinearProgram, solve_lp
from .valuations import GridValues, Instance, QueryLedger, ValuationFn
from .verification import Check, VerificationReport, check_eps_pareto, expected_utilities, is_dominated_by

ITEM_A, ITEM_B = 0, 1
TOTALS_TOL = 1e-6
CAP_STEP = 1e-4


def query_budget(epsilon: float) -> int:
    """Largest query count the lower bound covers, ``floor(1 / (2 eps))``."""
    return int(math.floor(1.0 / (2.0 * epsilon) + 1e-9))


@dataclass
class AdversaryState:
    """Probed points per (agent, item); value arguments and cut responses kept apart."""

    epsilon: float
    budget: int | None = None
    value_points: dict = field(default_factory=dict)
    cut_points: dict = field(default_factory=dict)
    ledger: QueryLedger = field(default_factory=QueryLedger)

    def probed(self, agent: int, item: int) -> list[float]:
        pts = set(self.value_points.get((agent, item), ())) | set(self.cut_points.get((agent, item), ()))
        return sorted(pts)

    def item_points(self, item: int, kind: str | None = None) -> list[float]:
        out = set()
        for src, k in ((self.value_points, "value"), (self.cut_points, "cut")):
            if kind in (None, k):
                for (_, it), pts in src.items():
                    if it == item:
                        out.update(pts)
        return sorted(out)


def _insert(store: dict, key, point: float):
    pts = store.setdefault(key, [])
    j = bisect.bisect_left(pts, point)
    if j == len(pts) or pts[j] != point:
        pts.insert(j, point)


def adversary_answer(state: AdversaryState, agent: int, item: int, kind: str, arg: float) -> float:
    """Identity answer to a value or cut query; the informative point is recorded."""
    if not (0 <= agent < 2 and 0 <= item < 2):
        raise ConfigError("the adversary handles two agents and two items")
    if state.budget is not None and state.ledger.total >= state.budget:
        raise AdversaryExhausted(f"query budget of {state.budget} used up")
    x = float(arg)
    if kind == "value":
        if not (0.0 <= x <= 1.0) or math.isnan(x):
            raise DomainError(f"allocation must lie in [0, 1], got {arg!r}")
        _insert(state.value_points, (agent, item), x)
    elif kind == "cut":
        if math.isnan(x) or x < 0.0:
            raise DomainError(f"cut value must be non-negative, got {arg!r}")
        if x > 1.0:
            raise UnattainableValueError(f"value {x!r} exceeds f(1) = 1.0")
        _insert(state.cut_points, (agent, item), x)
    else:
        raise ConfigError(f"unknown query kind {kind!r}")
    state.ledger.record(agent, item, kind, x, x)
    return x


class AdversaryOracle:
    """Drop-in query oracle (``n``, ``m``, ``value``, ``cut``) backed by an adversary state."""

    n = 2
    m = 2

    def __init__(self, epsilon: float, budget: int | None = None):
        self.state = AdversaryState(float(epsilon), budget)

    @property
    def ledger(self) -> QueryLedger:
        return self.state.ledger

    def value(self, agent: int, item: int, z: float) -> float:
        return adversary_answer(self.state, agent, item, "value", z)

    def cut(self, agent: int, item: int, v: float) -> float:
        return adversary_answer(self.state, agent, item, "cut", v)


# ---------------------------------------------------------------- forging


def bent_curve(x1: float, epsilon: float) -> ValuationFn:
    """Identity except on ``[x1, x1 + eps]``: slope 2 on the first half, flat on the second."""
    x2 = x1 + epsilon
    pts = [(0.0, 0.0), (x1, x1), (x1 + epsilon / 2, x2), (x2, x2)]
    if x2 < 1.0:
        pts.append((1.0, 1.0))
    return ValuationFn.piecewise_linear(pts, lipschitz=2.0)


def _bent_instance(bent_agent: int, x1: float, epsilon: float) -> Instance:
    rows = [[ValuationFn.linear(), ValuationFn.linear()] for _ in range(2)]
    rows[bent_agent][ITEM_B] = bent_curve(x1, epsilon)
    return Instance(rows)


@dataclass(frozen=True)
class ForgedInstances:
    x1: float
    epsilon: float
    i1: Instance
    i2: Instance
    i3: Instance

    @property
    def x2(self) -> float:
        return self.x1 + self.epsilon

    def named(self) -> dict:
        return {"I1": self.i1, "I2": self.i2, "I3": self.i3}

    def to_dict(self) -> dict:
        return {
            "interval": [self.x1, self.x2],
            "epsilon": self.epsilon,
            "instances": {k: v.to_dict() for k, v in self.named().items()},
        }


def _interval_ok(state: AdversaryState, x1: float, epsilon: float) -> bool:
    x2 = x1 + epsilon
    if not (x1 > 0.5 and x2 <= 1.0):
        return False
    if any(x1 < p < x2 for p in state.item_points(ITEM_B, "value")):
        return False
    # a cut for the top value would be answered at the kink, not at x2
    return not any(x1 < p <= x2 for p in state.item_points(ITEM_B, "cut"))


def select_interval(state: AdversaryState, epsilon: float | None = None) -> float:
    """Left end of an unprobed length-``eps`` stretch of item ``b`` in (1/2, 1].

    Takes the largest gap between probed points (leftmost on ties) and
    starts the stretch at most ``eps/2`` past the gap's left end, so
    neither end touches a probe.
    """
    eps = state.epsilon if epsilon is None else float(epsilon)
    pts = [0.5] + [p for p in state.item_points(ITEM_B) if 0.5 < p < 1.0] + [1.0]
    # sizes compared at 1e-12 so float noise does not break ties
    gaps = [(round(hi - lo, 12), -j, lo, hi) for j, (lo, hi) in enumerate(zip(pts, pts[1:]))]
    _, _, lo, hi = max(gaps)
    size = hi - lo
    if size >= eps:
        x1 = lo + min(eps / 2, (size - eps) / 2)
        if _interval_ok(state, x1, eps):
            return x1
    raise AdversaryExhausted(f"largest unprobed gap on item b above 1/2 is {size:.6g}, need more than {eps:.6g}")


def forge_instances(state: AdversaryState, epsilon: float | None = None, x1: float | None = None) -> ForgedInstances:
    eps = state.epsilon if epsilon is None else float(epsilon)
    if x1 is None:
        x1 = select_interval(state, eps)
    elif not _interval_ok(state, float(x1), eps):
        raise AdversaryExhausted(f"[{x1}, {x1 + eps}] is not an unprobed stretch of item b above 1/2")
    x1 = float(x1)
    i1 = Instance([[ValuationFn.linear(), ValuationFn.linear()] for _ in range(2)])
    return ForgedInstances(x1, eps, i1, _bent_instance(1, x1, eps), _bent_instance(0, x1, eps))


def replay(ledger: QueryLedger, instance: Instance) -> list[dict]:
    """Re-ask every recorded query against ``instance``; returns the mismatches (bitwise)."""
    bad = []
    for agent, item, q in ledger.transcript:
        f = instance.valuations[agent][item]
        got = f.value(q.arg) if q.kind == "value" else f.cut(q.arg)
        if got != q.response:
            bad.append({"agent": agent, "item": item, "kind": q.kind, "arg": q.arg, "recorded": q.response, "replayed": got})
    return bad


def transcript_consistent(ledger: QueryLedger, forged: ForgedInstances) -> dict:
    return {name: replay(ledger, inst) for name, inst in forged.named().items()}


# ---------------------------------------------------------------- audit


def reference_lottery(forged: ForgedInstances, which: str = "I2") -> Lottery:
    """Deterministic envy-free outcome that beats every total-1 lottery in ``which``.

    The bent agent gets ``x1 + eps/2`` of b and ``1 - x1 - 5 eps/8`` of a;
    the other agent gets the rest.
    """
    x1, eps = forged.x1, forged.epsilon
    bent = {"I2": 1, "I3": 0}[which]
    x = np.zeros((2, 2))
    x[bent] = (1.0 - x1 - 5 * eps / 8, x1 + eps / 2)
    x[1 - bent] = 1.0 - x[bent]
    return Lottery.deterministic(x)


def utility_cap(instance: Instance, step: float = CAP_STEP) -> np.ndarray:
    """Per-agent best utility over bundles of total size 1, by grid search on the b share."""
    yb = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    ya = 1.0 - yb
    caps = np.empty(2)
    for i, (fa, fb) in enumerate(instance.valuations):
        caps[i] = np.max(fa.values_unchecked(ya) + fb.values_unchecked(yb))
    return caps


def _on_grid(z: float, step: float = CAP_STEP) -> bool:
    return abs(z / step - round(z / step)) < 1e-6


def _dominated(lottery: Lottery, forged: ForgedInstances, which: str, pieces: int) -> dict:
    inst = forged.named()[which]
    slack = forged.epsilon / 16
    ref = reference_lottery(forged, which)
    if is_dominated_by(ref, lottery, inst, slack, ef=True):
        u, _ = expected_utilities(ref, inst)
        return {"defeated": True, "how": "reference", "witness": {"lottery": ref.to_dict(), "utilities": u.tolist()}}
    rep = check_eps_pareto(lottery, inst, slack, "ef_lotteries", pieces=pieces)
    chk = rep.checks[0]
    return {"defeated": not chk.passed, "how": "lp", "witness": chk.witness, "details": chk.details}


def audit_lottery(forged: ForgedInstances, lottery: Lottery, epsilon: float | None = None, pieces: int = 40) -> VerificationReport:
    """Walk the lower-bound argument for one output lottery.

    The report passes only if the lottery survives every step, which the
    argument says cannot happen.
    """
    if (lottery.n, lottery.m) != (2, 2):
        raise ConfigError("audits need a lottery over two agents and two items")
    eps = forged.epsilon if epsilon is None else float(epsilon)
    rep = VerificationReport()

    totals = (lottery.probabilities[:, None] * lottery.allocations.sum(axis=2)).sum(axis=0)
    u1, U1 = expected_utilities(lottery, forged.i1)
    rep.add(
        Check(
            "equal_totals_in_I1",
            bool(np.all(np.abs(totals - 1.0) <= TOTALS_TOL)),
            {"expected_totals": totals.tolist(), "cross_utilities_I1": U1.tolist(), "tolerance": TOTALS_TOL},
        )
    )

    ref = reference_lottery(forged, "I2")
    ru, RU = expected_utilities(ref, forged.i2)
    need = np.array([1 + eps / 8, 1 + 3 * eps / 8])
    ok = bool(np.all(ru >= need - 1e-12) and np.all(np.diagonal(RU)[:, None] >= RU - 1e-12))
    rep.add(
        Check(
            "reference_lottery_in_I2",
            ok,
            {"allocation": ref.allocations[0].tolist(), "utilities": ru.tolist(), "required": need.tolist(), "cross_utilities": RU.tolist()},
        )
    )

    caps = {name: utility_cap(forged.named()[name]).tolist() for name in ("I2", "I3")}
    top = 1 + eps / 2
    # off-grid peaks are missed by at most one step (the excess over the linear curve has slope 1)
    cap_tol = 1e-9 if _on_grid(forged.x1 + eps / 2) else CAP_STEP
    cap_ok = all(abs(max(c) - top) <= cap_tol and min(c) <= 1.0 + 1e-9 for c in caps.values())
    rep.add(Check("utility_cap", cap_ok, {"caps": caps, "expected": top, "step": CAP_STEP, "tolerance": cap_tol}))

    verdicts = {name: _dominated(lottery, forged, name, pieces) for name in ("I2", "I3")}
    defeated = [name for name, v in verdicts.items() if v["defeated"]]
    rep.add(
        Check(
            "undominated_in_I2_and_I3",
            not defeated,
            {"slack": eps / 16, "defeated_by": defeated, "interval": [forged.x1, forged.x2]},
            {name: verdicts[name]["witness"] for name in defeated} if defeated else None,
        )
    )
    return rep


def randomization_ceiling(forged: ForgedInstances, pieces: int) -> float:
    """Largest ``t`` such that some grid lottery with expected totals 1 per agent
    gives agent 1 at least ``t`` in I2 and agent 0 at least ``t`` in I3.
    """
    graph = build_flow_graph(2, 2, pieces)
    W2 = utility_coefficients(graph, GridValues.from_instance(forged.i2, pieces))
    W3 = utility_coefficients(graph, GridValues.from_instance(forged.i3, pieces))
    E = graph.num_edges
    lp = LinearProgram(E + 1, np.r_[np.zeros(E), 1.0], upper=np.r_[np.ones(E), np.inf])
    add_flow_rows(lp, graph)
    for agent in range(2):
        mask = graph.agent == agent
        idx = np.nonzero(mask & (graph.amount > 0))[0]
        lp.add_row(idx, graph.amount[idx] / pieces, "=", 1.0, f"total_{agent}")
    for coef in (W2[1, 1], W3[0, 0]):
        nz = np.nonzero(coef)[0]
        lp.add_row(np.r_[nz, E], np.r_[coef[nz], -1.0], ">=", 0.0)
    sol = solve_lp(lp)
    if not sol.optimal:
        raise ConfigError(f"ceiling LP returned status {sol.status}")
    return float(sol.x[E])


def uniform_lottery() -> Lottery:
    """Each agent gets everything with probability one half."""
    x = np.zeros((2, 2, 2))
    x[0, 0] = 1.0
    x[1, 1] = 1.0
    return Lottery(np.array([0.5, 0.5]), x)
