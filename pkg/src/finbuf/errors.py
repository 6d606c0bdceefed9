"""Exception hierarchy shared by the analytic modules and the CLI."""


class FinbufError(Exception):
    """Base class for all package errors."""


class ValidationError(FinbufError, ValueError):
    """Invalid parameters or a malformed scenario."""


class NumericalError(FinbufError, ArithmeticError):
    """A computation could not be completed reliably."""


class RootNotFoundError(NumericalError):
    """No root exists in the requested interval or the solver stalled."""


class RegimeError(FinbufError, ValueError):
    """The requested formula does not apply to the load regime of the input."""


class OutOfScopeError(RegimeError):
    """The inputs fall into a regime outside what the toolkit implements."""


class InvariantError(NumericalError):
    """A computed result violates an identity it must satisfy."""
