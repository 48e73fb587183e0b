class EflotteryError(Exception):
    pass


class DomainError(EflotteryError, ValueError):
    """Argument outside the domain of a valuation function."""


class UnattainableValueError(DomainError):
    """Cut query for a value above f(1)."""


class ConfigError(EflotteryError, ValueError):
    pass


class InstanceLoadError(EflotteryError, ValueError):
    pass


class AssemblyError(EflotteryError, ValueError):
    pass


class InvalidFlowError(EflotteryError, ValueError):
    pass


class SolverError(EflotteryError, RuntimeError):
    """An LP that must be solvable came back infeasible or unbounded."""


class DerandomizationError(EflotteryError):
    """Marginals that no lottery over feasible outcomes can realize."""


class SizeError(EflotteryError, ValueError):
    pass


class AdversaryExhausted(EflotteryError):
    """The protocol asked enough queries to leave no unprobed gap."""
