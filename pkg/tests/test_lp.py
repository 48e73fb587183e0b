import numpy as np
import pytest
from scipy.optimize import linprog

from eflottery._backend import interpreted
from eflottery.errors import AssemblyError
from eflottery.lp import LinearProgram, lexi_solve, read_mps, solve_lp, write_mps
from eflottery.lp import _simplex


def random_lp(rng, m=8, n=12, eq=2, sense="max"):
    lp = LinearProgram(n, rng.uniform(-1, 1, n), lower=rng.uniform(-1, 0, n), upper=rng.uniform(0.5, 3, n), sense=sense)
    for r in range(m):
        coef = rng.uniform(-1, 1, n) * (rng.random(n) < 0.6)
        s = "=" if r < eq else ("<=" if rng.random() < 0.5 else ">=")
        lp.add_row(np.arange(n), coef, s, float(rng.uniform(-0.5, 0.5)))
    return lp


def highs(lp):
    A, b, senses = lp.dense()
    sign = {"<=": 1.0, ">=": -1.0}
    ub_rows = [(sign[s] * A[r], sign[s] * b[r]) for r, s in enumerate(senses) if s != "="]
    eq_rows = [(A[r], b[r]) for r, s in enumerate(senses) if s == "="]
    c = -lp.objective if lp.sense == "max" else lp.objective
    res = linprog(
        c,
        A_ub=np.array([a for a, _ in ub_rows]) if ub_rows else None,
        b_ub=np.array([v for _, v in ub_rows]) if ub_rows else None,
        A_eq=np.array([a for a, _ in eq_rows]) if eq_rows else None,
        b_eq=np.array([v for _, v in eq_rows]) if eq_rows else None,
        bounds=list(zip(lp.lower, lp.upper)),
        method="highs",
    )
    return res


@pytest.mark.parametrize("seed", range(40))
def test_matches_highs(seed):
    rng = np.random.default_rng(seed)
    lp = random_lp(rng, sense="max" if seed % 2 else "min")
    ours, ref = solve_lp(lp), highs(lp)
    if ref.status == 2:
        assert ours.status == "infeasible"
        return
    assert ref.status == 0
    assert ours.optimal
    obj = ref.fun if lp.sense == "min" else -ref.fun
    assert ours.objective == pytest.approx(obj, abs=1e-7)
    assert lp.max_violation(ours.x) <= 1e-8


def test_infeasible_and_unbounded():
    lp = LinearProgram(2)
    lp.add_row([0, 1], [1, 1], ">=", 3.0)
    assert solve_lp(lp).status == "infeasible"
    lp = LinearProgram(2, np.array([1.0, 0.0]), upper=np.array([np.inf, 1.0]))
    lp.add_row([0, 1], [1, -1], ">=", 0.0)
    assert solve_lp(lp).status == "unbounded"


def test_no_rows():
    lp = LinearProgram(3, np.array([1.0, -1.0, 0.5]))
    sol = solve_lp(lp)
    assert sol.x.tolist() == [1.0, 0.0, 1.0]


def test_degenerate_assignment():
    # highly degenerate: every vertex of the 4x4 assignment polytope is degenerate
    n = 4
    rng = np.random.default_rng(3)
    C = rng.integers(0, 3, (n, n)).astype(float)
    lp = LinearProgram(n * n, C.reshape(-1))
    for i in range(n):
        lp.add_row(np.arange(i * n, (i + 1) * n), np.ones(n), "=", 1.0)
        lp.add_row(np.arange(i, n * n, n), np.ones(n), "=", 1.0)
    sol = solve_lp(lp)
    assert sol.optimal
    from itertools import permutations

    best = max(sum(C[i, p[i]] for i in range(n)) for p in permutations(range(n)))
    assert sol.objective == pytest.approx(best)


def test_deterministic():
    rng = np.random.default_rng(11)
    lp = random_lp(rng, m=15, n=25)
    a, b = solve_lp(lp), solve_lp(lp.copy())
    assert a.status == b.status
    if a.optimal:
        assert np.array_equal(a.x, b.x)


def test_compiled_and_interpreted_kernels_agree():
    rng = np.random.default_rng(5)
    m, N = 6, 14
    AT = np.ascontiguousarray(np.vstack([rng.uniform(-1, 1, (N - m, m)), np.eye(m)]))
    b = np.abs(rng.uniform(0.1, 1, m))
    lb, ub = np.zeros(N), np.r_[np.ones(N - m), np.full(m, np.inf)]
    c = np.r_[np.zeros(N - m), np.ones(m)]
    args = lambda: (AT, b, c, lb, ub, np.arange(N - m, N), np.zeros(N, dtype=np.bool_), 500, 100, 1e-10, 1e-9, 50)  # noqa: E731
    s1, x1, i1 = _simplex.simplex_core(*args())
    s2, x2, i2 = interpreted(_simplex.simplex_core)(*args())
    assert (s1, i1) == (s2, i2)
    assert np.allclose(x1, x2, atol=1e-12)


def test_bounds_validation():
    with pytest.raises(AssemblyError):
        LinearProgram(2, lower=np.array([-np.inf, 0.0]))
    with pytest.raises(AssemblyError):
        LinearProgram(2, lower=np.array([2.0, 0.0]))
    lp = LinearProgram(2)
    with pytest.raises(AssemblyError):
        lp.add_row([0, 5], [1, 1], "<=", 1)
    with pytest.raises(AssemblyError):
        lp.add_row([0], [1], "<", 1)


def test_mps_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    lp = random_lp(rng)
    lp.upper[0] = np.inf
    lp.lower[1] = lp.upper[1] = 0.5
    text = write_mps(lp, tmp_path / "p.mps")
    assert (tmp_path / "p.mps").read_text() == text
    back = read_mps(tmp_path / "p.mps")
    A1, b1, s1 = lp.dense()
    A2, b2, s2 = back.dense()
    assert s1 == s2 and back.sense == lp.sense
    assert np.allclose(A1, A2, rtol=1e-11) and np.allclose(b1, b2, rtol=1e-11)
    assert np.allclose(back.objective, lp.objective, rtol=1e-11)
    assert np.allclose(back.lower, lp.lower, rtol=1e-11) and np.array_equal(np.isinf(back.upper), np.isinf(lp.upper))
    assert solve_lp(back).objective == pytest.approx(solve_lp(lp).objective, abs=1e-9)


def test_mps_fixed_fields():
    lp = LinearProgram(2, np.array([1.0, 2.0]))
    lp.add_row([0, 1], [1.0, 1.0], "<=", 1.5)
    lines = write_mps(lp).splitlines()
    assert lines[0].startswith("NAME")
    body = [ln for ln in lines if ln.startswith("    C0000000")]
    assert body and all(len(ln) == len(body[0]) for ln in body)


def test_leximin_raises_the_worse_off_first():
    # x1 is capped at 0.3, so it is frozen first and x0 takes the rest
    lp = LinearProgram(2)
    lp.add_row([0, 1], [1, 1], "<=", 1.0)
    lp.add_row([1], [1], "<=", 0.3)
    sol = lexi_solve(lp, np.eye(2))
    assert sol.x == pytest.approx([0.7, 0.3], abs=1e-7)


def test_leximin_beyond_maximin():
    # three groups; maximin alone leaves the split of the slack undetermined
    lp = LinearProgram(3)
    lp.add_row([0, 1, 2], [1, 1, 1], "<=", 1.2)
    lp.add_row([0], [1], "<=", 0.2)
    sol = lexi_solve(lp, np.eye(3))
    assert sorted(sol.x) == pytest.approx([0.2, 0.5, 0.5], abs=1e-7)
