"""Exception types shared across the package."""


class DivDiffError(Exception):
    """Base class for all library errors."""


class InvalidInputError(DivDiffError, ValueError):
    """An argument violates a documented precondition."""


class ContractError(DivDiffError, RuntimeError):
    """A component produced output that breaks an internal contract."""


class DegenerateInputError(DivDiffError, ValueError):
    """Input is well formed but numerically unusable (e.g. a zero feature)."""


class FactorizationError(DivDiffError, ArithmeticError):
    """A symmetric factorization failed (matrix not positive definite)."""


class NumericalError(DivDiffError, ArithmeticError):
    """A numerical routine failed after its recovery policy was exhausted."""


class TraceFormatError(DivDiffError, ValueError):
    """A logits trace file is malformed or unreadable."""
