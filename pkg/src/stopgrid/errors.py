"""Exception hierarchy shared by the solver, the Monte Carlo engine and the CLI."""


class StopgridError(Exception):
    pass


class InvalidParameterError(StopgridError, ValueError):
    """A model or configuration invariant does not hold."""


class DomainError(StopgridError, ValueError):
    """A belief argument lies outside the domain of the function."""


class NumericalError(StopgridError, RuntimeError):
    """The discretisation broke down; refine the grid and retry."""


class NoSignChangeError(NumericalError):
    pass


class MultipleSignChangeError(NumericalError):
    pass


class SingularSystemError(NumericalError):
    pass


class InstabilityError(StopgridError, ValueError):
    """Explicit time stepping would violate its stability bound."""
