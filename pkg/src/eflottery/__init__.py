"""Envy-free lotteries over allocations of homogeneous divisible goods."""

from ._backend import backend_name
from .errors import (
    AdversaryExhausted,
    DerandomizationError,
    DomainError,
    EflotteryError,
    InstanceLoadError,
    InvalidFlowError,
    SolverError,
    UnattainableValueError,
)
from .flow import FlowGraph, FlowSolution, SolverConfig, build_flow_graph, solve_ef_lottery, solve_grid
from .lottery import Lottery, decompose, marginals
from .rsd import rsd_lottery, rsd_run
from .valuations import (
    GridValues,
    Instance,
    QueryLedger,
    QueryOracle,
    ValuationFn,
    discretize,
    dump_instance,
    load_instance,
)
from .verification import (
    VerificationReport,
    check_eps_pareto,
    check_ex_ante_ef,
    check_ex_post,
    check_ex_post_pareto,
    expected_utilities,
    frontier_sweep,
)

__version__ = "0.1.0"
