"""Exception taxonomy shared across the package.

Each class maps to one CLI exit code so that scripted callers can
distinguish bad inputs from numerical failures from geometry violations.
"""


class ShflabError(Exception):
    """Base class for all package errors."""


class ConfigError(ShflabError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


class AccuracyError(ShflabError):
    """A quadrature or tabulation failed to reach its tolerance (exit code 3)."""


class GeometryError(ShflabError):
    """A geometric precondition failed, e.g. overlapping tubes or a path
    leaving the noise grid too often (exit code 4)."""


class DomainError(ShflabError, ValueError):
    """Arguments outside the mathematical domain of an operation."""
