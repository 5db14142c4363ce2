"""Exception types shared across the package."""


class HawkesError(Exception):
    """Base class."""


class StepSizeError(HawkesError, ValueError):
    """The grid step is too coarse for the implicit update to be well posed."""


class ConvergenceError(HawkesError, ArithmeticError):
    """An iteration failed to converge."""


class DomainError(HawkesError, ValueError):
    """An argument lies outside the domain where a formula is valid."""


class RegimeError(HawkesError, ValueError):
    """The kernel does not belong to the regime an operation requires."""


class BlowUpError(HawkesError, ArithmeticError):
    """A numerical solution left its a-priori bound."""


class UnsupportedError(HawkesError, ValueError):
    """The requested method does not apply to this kernel."""


class IndeterminateError(HawkesError, ValueError):
    """The available data do not decide the question asked."""
