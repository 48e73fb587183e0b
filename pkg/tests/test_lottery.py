from fractions import Fraction

import numpy as np
import pytest

from eflottery.errors import InvalidFlowError
from eflottery.flow import SolverConfig, build_flow_graph, solve_ef_lottery
from eflottery.lottery import Lottery, decompose, marginals
from eflottery.valuations import Instance, ValuationFn


def _edge(g, item, column, row, amount):
    hit = np.nonzero((g.item == item) & (g.column == column) & (g.entry_row == row) & (g.amount == amount))[0]
    assert hit.size == 1
    return hit[0]


def _path_flow(g, paths):
    """Flow from ``(prob, [(item, column, row, amount), ...])`` pairs."""
    f = np.zeros(g.num_edges)
    for p, edges in paths:
        for e in edges:
            f[_edge(g, *e)] += p
    return f


def test_two_path_decomposition():
    g = build_flow_graph(2, 1, 2)
    # half: agent 0 gets everything; half: 1/2 each
    f = _path_flow(g, [(0.5, [(0, 0, 0, 2), (0, 1, 2, 0), (0, 2, 2, 0)]), (0.5, [(0, 0, 0, 1), (0, 1, 1, 1), (0, 2, 2, 0)])])
    lot = decompose(g, f)
    assert lot.probabilities.tolist() == [0.5, 0.5]
    assert sorted(lot.allocations[:, :, 0].tolist()) == [[0.5, 0.5], [1.0, 0.0]]
    assert marginals(lot)[:, 0].tolist() == [0.75, 0.25]


def test_decomposition_is_deterministic():
    inst = Instance([[ValuationFn.inverted_power(2)], [ValuationFn.power(2)], [ValuationFn.linear()]])
    sol = solve_ef_lottery(inst, SolverConfig(Fraction(1, 4)))
    a, b = decompose(sol.graph, sol.flow), decompose(sol.graph, sol.flow.copy())
    assert np.array_equal(a.probabilities, b.probabilities)
    assert np.array_equal(a.allocations, b.allocations)


def test_rejects_bad_flows():
    g = build_flow_graph(2, 1, 2)
    with pytest.raises(InvalidFlowError):
        decompose(g, np.zeros(3))
    f = np.zeros(g.num_edges)
    f[_edge(g, 0, 0, 0, 1)] = 1.0
    with pytest.raises(InvalidFlowError, match="conservation"):
        decompose(g, f)
    with pytest.raises(InvalidFlowError):
        decompose(g, -np.ones(g.num_edges))


def test_lottery_validation():
    with pytest.raises(ValueError):
        Lottery(np.array([0.5, 0.4]), np.zeros((2, 2, 1)))
    with pytest.raises(ValueError):
        Lottery(np.array([1.0, 0.0]), np.zeros((2, 2, 1)))
    with pytest.raises(ValueError):
        Lottery(np.array([1.0]), np.full((1, 2, 1), 1.5))
    with pytest.raises(ValueError):
        Lottery(np.array([1.0]), np.zeros((2, 1)))


def test_infeasible_outcome_is_representable_but_flagged():
    lot = Lottery.deterministic([[0.7], [0.6]])
    assert not lot.is_feasible()


def test_merge_and_mixture():
    a = Lottery.deterministic([[1.0], [0.0]])
    b = Lottery.deterministic([[0.0], [1.0]])
    mix = Lottery.mixture([(0.25, a), (0.25, a), (0.5, b)])
    assert mix.support_size == 3
    m = mix.merged()
    assert m.support_size == 2 and m.probabilities.tolist() == [0.5, 0.5]


def test_file_round_trip(tmp_path):
    lot = Lottery(np.array([0.25, 0.75]), np.array([[[0.5, 0.0], [0.5, 1.0]], [[1.0, 0.25], [0.0, 0.75]]]))
    lot.dump(tmp_path / "l.json")
    back = Lottery.load(tmp_path / "l.json")
    assert np.array_equal(back.probabilities, lot.probabilities)
    assert np.array_equal(back.allocations, lot.allocations)
