"""Exception hierarchy shared by every module.

Each error carries a short machine-readable ``code`` so the CLI can map
failures onto exit statuses and tests can assert on the exact diagnostic.
"""
from __future__ import annotations


class DrypatternError(Exception):
    code = "ERROR"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ParameterError(DrypatternError, ValueError):
    """Inputs violate a parameter-domain invariant."""

    code = "BAD_PARAMETER"


class DomainError(DrypatternError, ValueError):
    """A state lies outside the region where a formula is defined."""

    code = "OUT_OF_DOMAIN"


class RegimeError(DrypatternError):
    """The parameter point does not belong to the regime a construction needs."""

    code = "REGIME"


class NumericalError(DrypatternError, RuntimeError):
    """An iterative or integration procedure failed."""

    code = "NUMERICAL"
