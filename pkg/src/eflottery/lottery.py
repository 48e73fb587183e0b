"""Lotteries over outcomes and decomposition of unit flows into them."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidFlowError
from .flow import FlowGraph, FlowSolution

FEAS_TOL = 1e-9
DUST = 1e-12
CONSERVATION_TOL = 1e-9


@dataclass(frozen=True)
class Lottery:
    """``probabilities[l]`` on outcome ``allocations[l]`` (an ``n x m`` matrix of fractions)."""

    probabilities: np.ndarray
    allocations: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).reshape(-1)
        x = np.asarray(self.allocations, dtype=float)
        if x.ndim != 3 or x.shape[0] != p.size:
            raise ValueError("allocations must have shape (support, n, m) matching probabilities")
        if np.any(p <= 0.0):
            raise ValueError("support probabilities must be positive")
        if abs(p.sum() - 1.0) > FEAS_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        if np.any(x < -FEAS_TOL) or np.any(x > 1.0 + FEAS_TOL):
            raise ValueError("allocation fractions must lie in [0, 1]")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "allocations", x)

    @classmethod
    def deterministic(cls, allocation) -> "Lottery":
        x = np.asarray(allocation, dtype=float)
        return cls(np.ones(1), x[None])

    @classmethod
    def mixture(cls, parts) -> "Lottery":
        """Convex combination of ``(weight, lottery)`` pairs."""
        probs, allocs = [], []
        for w, lot in parts:
            if w > 0:
                probs.append(w * lot.probabilities)
                allocs.append(lot.allocations)
        return cls(np.concatenate(probs), np.concatenate(allocs))

    @property
    def n(self) -> int:
        return self.allocations.shape[1]

    @property
    def m(self) -> int:
        return self.allocations.shape[2]

    @property
    def support_size(self) -> int:
        return self.probabilities.size

    @property
    def support(self):
        return list(zip(self.probabilities.tolist(), self.allocations))

    def item_totals(self) -> np.ndarray:
        """``(support, m)`` amount of each item handed out in each outcome."""
        return self.allocations.sum(axis=1)

    def is_feasible(self) -> bool:
        return bool(np.all(self.item_totals() <= 1.0 + FEAS_TOL))

    def merged(self) -> "Lottery":
        """Combine identical outcomes."""
        keys: dict[bytes, int] = {}
        probs: list[float] = []
        allocs: list[np.ndarray] = []
        for p, x in zip(self.probabilities, self.allocations):
            key = x.tobytes()
            if key in keys:
                probs[keys[key]] += p
            else:
                keys[key] = len(probs)
                probs.append(p)
                allocs.append(x)
        return Lottery(np.array(probs), np.array(allocs))

    def to_dict(self) -> dict:
        return {
            "support": [
                {"probability": float(p), "allocation": x.tolist()} for p, x in zip(self.probabilities, self.allocations)
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Lottery":
        sup = data["support"]
        return cls(np.array([s["probability"] for s in sup]), np.array([s["allocation"] for s in sup], dtype=float))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Lottery":
        return cls.from_dict(json.loads(Path(path).read_text()))


def marginals(lottery: Lottery) -> np.ndarray:
    """Expected allocation ``sum_l p_l x^l``."""
    return np.tensordot(lottery.probabilities, lottery.allocations, axes=1)


def decompose(graph: FlowGraph, flow, merge: bool = False) -> Lottery:
    """Strip source-to-sink paths off a unit flow.

    At every vertex the positive edge with the smallest index is followed;
    each path carries its bottleneck probability and becomes one outcome.
    """
    if isinstance(flow, FlowSolution):
        flow = flow.flow
    f = np.array(flow, dtype=float)
    if f.shape != (graph.num_edges,):
        raise InvalidFlowError(f"flow has {f.size} entries for {graph.num_edges} edges")
    if np.any(f < -CONSERVATION_TOL) or np.any(f > 1.0 + CONSERVATION_TOL):
        raise InvalidFlowError("edge probabilities must lie in [0, 1]")
    err = FlowSolution(graph, None, f, 0.0).conservation_error()
    if err > CONSERVATION_TOL:
        raise InvalidFlowError(f"flow violates conservation by {err:.3e}")
    f[f < DUST] = 0.0

    offsets, order = graph.out_edges()
    heads = graph.head
    k = graph.pieces
    probs: list[float] = []
    outcomes: list[np.ndarray] = []
    remaining = 1.0
    for _ in range(graph.num_edges + 1):
        if remaining <= DUST:
            break
        v = graph.source
        path = []
        while v != graph.sink:
            nxt = -1
            for e in order[offsets[v] : offsets[v + 1]]:
                if f[e] > 0.0:
                    nxt = e
                    break
            if nxt < 0:
                break
            path.append(nxt)
            v = heads[nxt]
        if v != graph.sink:
            if remaining > CONSERVATION_TOL:
                raise InvalidFlowError(f"path stripping stalled with {remaining:.3e} probability left")
            break
        path = np.array(path)
        bottleneck = float(f[path].min())
        f[path] -= bottleneck
        f[f < DUST] = 0.0
        remaining -= bottleneck
        x = np.zeros((graph.n, graph.m))
        agent = graph.agent[path]
        mask = agent >= 0
        x[agent[mask], graph.item[path][mask]] = graph.amount[path][mask] / k
        probs.append(bottleneck)
        outcomes.append(x)

    p = np.array(probs)
    lot = Lottery(p, np.array(outcomes))
    return lot.merged() if merge else lot
