from .model import LinearProgram, LpSolution, Row, lexi_solve, solve_lp
from .mps import read_mps, write_mps

__all__ = ["LinearProgram", "LpSolution", "Row", "lexi_solve", "solve_lp", "read_mps", "write_mps"]
