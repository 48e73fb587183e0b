"""Chained layered flow graph over grid pieces and the lottery LPs built on it.

Per item there are ``n`` columns of ``k + 1`` vertices; row ``j`` of column
``c`` means ``j`` pieces of the item went to agents ``0..c``. An edge into
column ``c`` raising the row by ``y`` hands ``y`` pieces to agent ``c``.
Items are chained: the sink of item ``t`` is the source of item ``t + 1``,
so the graph has ``m + 1`` junction vertices, junction 0 being the global
source and junction ``m`` the global sink.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import AssemblyError, ConfigError, DerandomizationError, SolverError
from .lp import LinearProgram, lexi_solve, solve_lp
from .valuations import GridValues, Instance, QueryLedger, QueryOracle, discretize, grid_pieces

log = logging.getLogger(__name__)

OBJECTIVES = ("welfare", "leximin")
FAIRNESS = ("ef", "prop", "none")


@dataclass(frozen=True)
class FlowGraph:
    n: int
    m: int
    pieces: int
    tail: np.ndarray = field(repr=False)
    head: np.ndarray = field(repr=False)
    item: np.ndarray = field(repr=False)
    column: np.ndarray = field(repr=False)
    entry_row: np.ndarray = field(repr=False)
    amount: np.ndarray = field(repr=False)

    @property
    def num_vertices(self) -> int:
        return self.m + 1 + self.m * self.n * (self.pieces + 1)

    @property
    def num_edges(self) -> int:
        return self.tail.size

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return self.m

    @property
    def agent(self) -> np.ndarray:
        """Receiving agent per edge, ``-1`` for edges into a junction."""
        return np.where(self.column < self.n, self.column, -1)

    def vertex(self, item: int, column: int, row: int) -> int:
        k1 = self.pieces + 1
        return self.m + 1 + (item * self.n + column) * k1 + row

    def out_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR adjacency ``(offsets, edge_ids)``; edges of a vertex in index order."""
        order = np.argsort(self.tail, kind="stable")
        counts = np.bincount(self.tail, minlength=self.num_vertices)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return offsets, order


def build_flow_graph(n: int, m: int, pieces: int) -> FlowGraph:
    if n < 1 or m < 1 or pieces < 1:
        raise ConfigError(f"flow graph needs n, m, pieces >= 1, got {n}, {m}, {pieces}")
    k1 = pieces + 1
    base = m + 1
    tails, heads, items, cols, rows, amts = [], [], [], [], [], []

    def add(t, h, it, c, r, y):
        tails.append(t)
        heads.append(h)
        items.append(it)
        cols.append(c)
        rows.append(r)
        amts.append(y)

    for it in range(m):
        grid0 = base + it * n * k1
        for j in range(k1):
            add(it, grid0 + j, it, 0, 0, j)
        for c in range(n - 1):
            for j in range(k1):
                for y in range(pieces - j + 1):
                    add(grid0 + c * k1 + j, grid0 + (c + 1) * k1 + j + y, it, c + 1, j, y)
        for j in range(k1):
            add(grid0 + (n - 1) * k1 + j, it + 1, it, n, j, 0)

    as_arr = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
    return FlowGraph(n, m, pieces, as_arr(tails), as_arr(heads), as_arr(items), as_arr(cols), as_arr(rows), as_arr(amts))


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class SolverConfig:
    epsilon: Fraction | float | str = Fraction(1, 4)
    objective: str | tuple = "welfare"
    fairness: str = "ef"

    def __post_init__(self):
        grid_pieces(self.epsilon)
        obj = self.objective
        if isinstance(obj, str) and obj.startswith("weights="):
            obj = parse_weights(obj)
            object.__setattr__(self, "objective", obj)
        if isinstance(obj, str):
            if obj not in OBJECTIVES:
                raise ConfigError(f"objective must be welfare, leximin or weights=<csv>, got {obj!r}")
        else:
            w = tuple(float(v) for v in obj)
            if any(v < 0 for v in w) or not w:
                raise ConfigError("objective weights must be non-negative")
            object.__setattr__(self, "objective", w)
        if self.fairness not in FAIRNESS:
            raise ConfigError(f"fairness must be one of {FAIRNESS}, got {self.fairness!r}")

    @property
    def pieces(self) -> int:
        return grid_pieces(self.epsilon)

    def check_guarantee(self, n: int, m: int) -> None:
        if 1.0 / self.pieces >= 1.0 / (m * n):
            warnings.warn(
                f"epsilon = 1/{self.pieces} is not below 1/(mn) = 1/{m * n}; "
                "the epsilon-Pareto guarantee does not apply",
                stacklevel=3,
            )


def parse_weights(text: str) -> tuple[float, ...]:
    body = text.split("=", 1)[1] if "=" in text else text
    try:
        return tuple(float(v) for v in body.split(","))
    except ValueError as exc:
        raise ConfigError(f"cannot parse weights {text!r}") from exc


# ---------------------------------------------------------------- LP assembly


def utility_coefficients(graph: FlowGraph, grid: GridValues) -> np.ndarray:
    """``W[i, a] @ p`` is agent ``i``'s expected value for agent ``a``'s lottery."""
    if (grid.n, grid.m, grid.pieces) != (graph.n, graph.m, graph.pieces):
        raise AssemblyError(
            f"grid ({grid.n}, {grid.m}, {grid.pieces}) does not match graph ({graph.n}, {graph.m}, {graph.pieces})"
        )
    n = graph.n
    W = np.zeros((n, n, graph.num_edges))
    agent = graph.agent
    for a in range(n):
        e = np.nonzero(agent == a)[0]
        W[:, a, e] = grid.values[:, graph.item[e], graph.amount[e]]
    return W


def add_flow_rows(lp: LinearProgram, graph: FlowGraph, offset: int = 0) -> None:
    """Conservation at every vertex except the global source and sink, unit outflow at the source."""
    V = graph.num_vertices
    inc: list[list[int]] = [[] for _ in range(V)]
    out: list[list[int]] = [[] for _ in range(V)]
    for e, (t, h) in enumerate(zip(graph.tail.tolist(), graph.head.tolist())):
        out[t].append(e)
        inc[h].append(e)
    for v in range(V):
        if v in (graph.source, graph.sink):
            continue
        idx = np.array(inc[v] + out[v], dtype=np.int64) + offset
        coef = np.concatenate([np.ones(len(inc[v])), -np.ones(len(out[v]))])
        lp.add_row(idx, coef, "=", 0.0, f"flow_v{v}")
    src = np.array(out[graph.source], dtype=np.int64) + offset
    lp.add_row(src, np.ones(src.size), "=", 1.0, "source")


def _sparse(row: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nz = np.nonzero(row)[0]
    return nz, row[nz]


def add_fairness_rows(lp: LinearProgram, W: np.ndarray, fairness: str, shares: np.ndarray | None = None) -> None:
    n = W.shape[0]
    if fairness == "ef":
        for i in range(n):
            for a in range(n):
                if a != i:
                    idx, coef = _sparse(W[i, i] - W[i, a])
                    lp.add_row(idx, coef, ">=", 0.0, f"ef_{i}_{a}")
    elif fairness == "prop":
        for i in range(n):
            idx, coef = _sparse(W[i, i])
            lp.add_row(idx, coef, ">=", float(shares[i]), f"prop_{i}")
    elif fairness != "none":
        raise ConfigError(f"unknown fairness {fairness!r}")


def assemble_lp(graph: FlowGraph, grid: GridValues, config: SolverConfig) -> LinearProgram:
    W = utility_coefficients(graph, grid)
    n = graph.n
    own = W[np.arange(n), np.arange(n)]
    if isinstance(config.objective, tuple):
        if len(config.objective) != n:
            raise AssemblyError(f"{len(config.objective)} weights given for {n} agents")
        objective = np.asarray(config.objective) @ own
    else:
        objective = own.sum(axis=0)
    lp = LinearProgram(graph.num_edges, objective)
    add_flow_rows(lp, graph)
    shares = grid.values[:, :, -1].sum(axis=1) / n
    add_fairness_rows(lp, W, config.fairness, shares)
    return lp


# ---------------------------------------------------------------- solving


@dataclass
class FlowSolution:
    graph: FlowGraph
    grid: GridValues
    flow: np.ndarray
    objective: float
    config: SolverConfig | None = None
    iterations: int = 0

    def cross_utilities(self) -> np.ndarray:
        """Grid-valued ``U[i, a] = u_i(L_a)``."""
        return utility_coefficients(self.graph, self.grid) @ self.flow

    def utilities(self) -> np.ndarray:
        return np.diagonal(self.cross_utilities()).copy()

    def expected_allocation(self) -> np.ndarray:
        """Expected fraction of each item per agent, read off the edges."""
        g = self.graph
        out = np.zeros((g.n, g.m))
        agent = g.agent
        mask = agent >= 0
        np.add.at(out, (agent[mask], g.item[mask]), self.flow[mask] * g.amount[mask] / g.pieces)
        return out

    def conservation_error(self) -> float:
        g = self.graph
        bal = np.zeros(g.num_vertices)
        np.add.at(bal, g.head, self.flow)
        np.subtract.at(bal, g.tail, self.flow)
        interior = np.ones(g.num_vertices, dtype=bool)
        interior[[g.source, g.sink]] = False
        src = -bal[g.source]
        return float(max(np.abs(bal[interior]).max(initial=0.0), abs(src - 1.0)))

    def to_dict(self) -> dict:
        g = self.graph
        edges = [
            {
                "item": int(g.item[e]),
                "column": int(g.column[e]),
                "entry_row": int(g.entry_row[e]),
                "pieces": int(g.amount[e]),
                "probability": float(self.flow[e]),
            }
            for e in np.nonzero(self.flow > 0.0)[0]
        ]
        return {"agents": g.n, "items": g.m, "pieces_per_item": g.pieces, "objective": self.objective, "edges": edges}

    @classmethod
    def from_dict(cls, data: dict, grid: GridValues) -> "FlowSolution":
        g = build_flow_graph(int(data["agents"]), int(data["items"]), int(data["pieces_per_item"]))
        key = {(int(a), int(b), int(c), int(d)): e for e, (a, b, c, d) in enumerate(zip(g.item, g.column, g.entry_row, g.amount))}
        flow = np.zeros(g.num_edges)
        for rec in data["edges"]:
            flow[key[(rec["item"], rec["column"], rec["entry_row"], rec["pieces"])]] = rec["probability"]
        return cls(g, grid, flow, float(data.get("objective", 0.0)))


def solve_grid(grid: GridValues, config: SolverConfig, graph: FlowGraph | None = None) -> FlowSolution:
    """Build, assemble and solve the flow LP for an already discretized instance."""
    graph = graph or build_flow_graph(grid.n, grid.m, grid.pieces)
    lp = assemble_lp(graph, grid, config)
    if config.objective == "leximin":
        W = utility_coefficients(graph, grid)
        sol = lexi_solve(lp, W[np.arange(grid.n), np.arange(grid.n)])
    else:
        sol = solve_lp(lp)
    if not sol.optimal:
        # the lottery giving everything to one uniformly random agent is always feasible
        raise SolverError(f"flow LP returned status {sol.status}")
    log.debug("flow LP: %d vars, %d rows, %d pivots", lp.num_vars, lp.num_rows, sol.iterations)
    return FlowSolution(graph, grid, sol.x, float(lp.objective @ sol.x), config, sol.iterations)


def solve_ef_lottery(source, config: SolverConfig, ledger: QueryLedger | None = None) -> FlowSolution:
    """Discretize with value queries, then solve the flow LP.

    ``source`` is an :class:`Instance` (queries logged to ``ledger``) or a
    query oracle such as :class:`eflottery.adversary.AdversaryOracle`.
    """
    if isinstance(source, Instance):
        source = QueryOracle(source, ledger if ledger is not None else QueryLedger())
    config.check_guarantee(source.n, source.m)
    grid = discretize(source, config.epsilon)
    return solve_grid(grid, config)


# ---------------------------------------------------------------- naive LP


def assemble_naive_lp(grid: GridValues, item: int = 0) -> LinearProgram:
    """Per-agent amount distributions, full allocation only in expectation.

    Variable ``i * (k + 1) + y`` is the probability agent ``i`` gets ``y`` pieces.
    """
    if not 0 <= item < grid.m:
        raise AssemblyError(f"item {item} out of range")
    n, k = grid.n, grid.pieces
    k1 = k + 1
    vals = grid.values[:, item, :]
    y = np.arange(k1)
    lp = LinearProgram(n * k1, vals.reshape(-1).copy())
    lp.add_row(np.arange(n * k1), np.tile(y / k, n), "=", 1.0, "expected_total")
    for i in range(n):
        lp.add_row(np.arange(i * k1, (i + 1) * k1), np.ones(k1), "=", 1.0, f"dist_{i}")
    for i in range(n):
        for a in range(n):
            if a != i:
                idx = np.concatenate([np.arange(i * k1, (i + 1) * k1), np.arange(a * k1, (a + 1) * k1)])
                coef = np.concatenate([vals[i], -vals[i]])
                lp.add_row(idx, coef, ">=", 0.0, f"ef_{i}_{a}")
    return lp


def naive_marginals(grid: GridValues, x: np.ndarray) -> np.ndarray:
    """``P[i, y]``: probability agent ``i`` receives ``y`` pieces."""
    return np.asarray(x).reshape(grid.n, grid.pieces + 1)


def derandomize_naive(grid: GridValues, marginals: np.ndarray, item: int = 0) -> FlowSolution:
    """Look for a flow whose per-agent amount distributions equal ``marginals``.

    Raises :class:`DerandomizationError` when no lottery over feasible
    outcomes has those distributions.
    """
    n, k = grid.n, grid.pieces
    sub = GridValues(k, grid.values[:, item : item + 1, :])
    graph = build_flow_graph(n, 1, k)
    lp = LinearProgram(graph.num_edges)
    add_flow_rows(lp, graph)
    agent = graph.agent
    for i in range(n):
        for y in range(k + 1):
            e = np.nonzero((agent == i) & (graph.amount == y))[0]
            lp.add_row(e, np.ones(e.size), "=", float(marginals[i, y]), f"marginal_{i}_{y}")
    sol = solve_lp(lp)
    if not sol.optimal:
        raise DerandomizationError(
            "no lottery over feasible outcomes realizes these per-agent distributions (flow LP infeasible)"
        )
    return FlowSolution(graph, sub, sol.x, 0.0, None, sol.iterations)
