"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands or files have incompatible dimensions."""


class DomainError(ValueError):
    """Values violate a domain precondition (negative weights, NaN, ...)."""


class ContractError(ValueError):
    """An API contract was violated (bad sizes, misuse of the tape, ...)."""


class ParseError(ValueError):
    """A data file could not be parsed; message carries row/column context."""


class TrainingDiverged(RuntimeError):
    """Training hit a NaN loss; message names the epoch and batch."""
