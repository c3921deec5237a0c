"""Exception types shared by all modules.

Every exception carries a short machine-parsable ``code`` that the command
line front end prints on failure.
"""

from __future__ import annotations


class CasimirError(Exception):
    code = "E_GENERIC"


class DomainError(CasimirError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""

    code = "E_DOMAIN"


class ConvergenceError(CasimirError, ArithmeticError):
    """An iterative or adaptive computation did not reach its tolerance.

    ``achieved_error`` holds the best error estimate reached and ``where``
    identifies the offending input (a separation, a frequency, ...).
    """

    code = "E_CONVERGENCE"

    def __init__(self, message: str, achieved_error: float = float("nan"), where=None):
        super().__init__(message)
        self.achieved_error = achieved_error
        self.where = where


class InstabilityError(ConvergenceError):
    """The cantilever equilibrium is lost (jump to contact)."""

    code = "E_INSTABILITY"


class GridMismatchError(CasimirError, ValueError):
    code = "E_GRID"


class FitError(CasimirError, ValueError):
    code = "E_FIT"


class CatalogLookupError(CasimirError, KeyError):
    code = "E_LOOKUP"

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ConfigError(CasimirError, ValueError):
    code = "E_CONFIG"


class DataFormatError(CasimirError, ValueError):
    code = "E_DATA"
