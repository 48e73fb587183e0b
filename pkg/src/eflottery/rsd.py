"""Random serial dictatorship with value and cut queries."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import ConfigError, SizeError
from .lottery import Lottery
from .valuations import Instance, QueryLedger, QueryOracle

MAX_EXACT_AGENTS = 8
RESIDUAL_RULES = ("amount", "shifted")


def _check_order(order, n: int) -> list[int]:
    order = [int(a) for a in order]
    if sorted(order) != list(range(n)):
        raise ConfigError(f"{order} is not a permutation of 0..{n - 1}")
    return order


def rsd_run(instance: Instance, order, ledger: QueryLedger | None = None, residual: str = "amount") -> np.ndarray:
    """Serve agents in ``order``; each takes the least amount of each item
    that gives her full value for what is left of it.

    ``residual="amount"`` values a take of ``z`` as ``f(z)``: the agent asks
    ``v = Value(f, r)`` for the remaining amount ``r`` and takes
    ``Cut(f, v)``. ``residual="shifted"`` instead treats what is left as the
    segment ``[1 - r, 1]`` of the curve, i.e. uses ``z -> f(1 - r + z) - f(1 - r)``.
    Two queries per agent and item either way.
    """
    if residual not in RESIDUAL_RULES:
        raise ConfigError(f"residual rule must be one of {RESIDUAL_RULES}")
    order = _check_order(order, instance.n)
    ledger = ledger if ledger is not None else QueryLedger()
    oracle = QueryOracle(instance, ledger)
    remaining = np.ones(instance.m)
    x = np.zeros((instance.n, instance.m))
    for agent in order:
        for item in range(instance.m):
            r = float(remaining[item])
            if residual == "amount":
                v = oracle.value(agent, item, r)
                take = oracle.cut(agent, item, v)
            else:
                f = instance.valuations[agent][item]
                a = 1.0 - r
                base = f.value(a)
                v = f.full_value - base
                ledger.record(agent, item, "value", r, v)
                take = max(0.0, f.cut(min(base + v, f.full_value)) - a)
                ledger.record(agent, item, "cut", v, take)
            take = min(take, r)
            x[agent, item] = take
            remaining[item] = r - take
    return x


def rsd_lottery(
    instance: Instance,
    mode: str = "exact",
    seed: int = 0,
    samples: int | None = None,
    ledger: QueryLedger | None = None,
    residual: str = "amount",
) -> Lottery:
    """Serial dictatorship over all ``n!`` orders (``exact``) or ``samples`` seeded random orders."""
    n = instance.n
    ledger = ledger if ledger is not None else QueryLedger()
    if mode == "exact":
        if n > MAX_EXACT_AGENTS:
            raise SizeError(f"exact enumeration supports n <= {MAX_EXACT_AGENTS}, got {n}")
        orders = list(itertools.permutations(range(n)))
    elif mode == "sampled":
        if samples is None or samples < 1:
            raise ConfigError("sampled mode needs samples >= 1")
        rng = np.random.default_rng(seed)
        orders = [tuple(rng.permutation(n).tolist()) for _ in range(samples)]
    else:
        raise ConfigError(f"mode must be 'exact' or 'sampled', got {mode!r}")
    outcomes = np.array([rsd_run(instance, o, ledger, residual) for o in orders])
    p = np.full(len(orders), 1.0 / len(orders))
    return Lottery(p, outcomes)


def expected_query_count(instance: Instance, mode: str, samples: int | None = None) -> int:
    runs = math.factorial(instance.n) if mode == "exact" else int(samples)
    return runs * 2 * instance.n * instance.m
