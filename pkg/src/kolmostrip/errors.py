"""Exception hierarchy. ``exit_code`` is what the CLI returns for each kind."""

from __future__ import annotations


class KolmostripError(Exception):
    exit_code = 3


class ParseError(KolmostripError, ValueError):
    """Malformed or inconsistent input file."""

    exit_code = 1


class DimensionError(KolmostripError, ValueError):
    exit_code = 2


class PreconditionError(KolmostripError, ValueError):
    """A hypothesis of a construction does not hold for the given input."""

    exit_code = 2


class InvariantError(KolmostripError):
    """A verification check failed."""

    exit_code = 3


class BudgetError(KolmostripError):
    """The requested width budget cannot be met.

    ``minimum`` is the smallest budget the strategy could achieve, when known.
    """

    exit_code = 4

    def __init__(self, message: str, minimum: float | None = None):
        super().__init__(message)
        self.minimum = minimum


class PieceCapError(BudgetError):
    """Merged function exceeds the piece cap even after pruning."""


class ProxConvergenceError(KolmostripError):
    """Active-set prox solver hit its iteration cap.

    Carries the best iterate and its KKT residual.
    """

    exit_code = 3

    def __init__(self, message: str, best=None, residual: float = float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual
