"""Exception hierarchy shared by all modules."""


class ToricSolitonError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ToricSolitonError, ValueError):
    """Invalid user input: unknown surface, resolution out of range, bad config."""


class DomainError(ToricSolitonError, ValueError):
    """A point lies on or outside the polytope where an interior point is required."""


class DegeneracyError(ToricSolitonError, ArithmeticError):
    """The symplectic Hessian stopped being positive definite."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class BlowUpError(DegeneracyError):
    """The flow diverged; carries the offending node and the last stable state."""

    def __init__(self, message, node=None, last_state=None):
        super().__init__(message, node=node)
        self.last_state = last_state


class SnapshotFormatError(ToricSolitonError, ValueError):
    """Snapshot header or payload does not match the expected format."""


class NumericalError(ToricSolitonError, ArithmeticError):
    """An iterative solver failed to converge."""
