from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"

# criterion number -> (passed, one-line detail); filled in by test_acceptance
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile (or load cached) kernels once so timing checks measure runs, not compilation."""
    from eflottery._kernels import dominator_search
    from eflottery.lp import LinearProgram, solve_lp

    lp = LinearProgram(2, np.array([1.0, 1.0]))
    lp.add_row([0, 1], [1.0, 1.0], "<=", 1.5)
    lp.add_row([0], [1.0], ">=", 0.1)
    solve_lp(lp)
    dominator_search(np.zeros((2, 2, 2)), np.zeros(2), 2, True)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
