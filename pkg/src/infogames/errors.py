"""Exception hierarchy shared by every solver in the package."""


class InfoGamesError(Exception):
    """Base class for all package errors."""


class ValidationError(InfoGamesError, ValueError):
    """Input fails a structural invariant (negative mass, bad sum, unknown id)."""


class DomainError(InfoGamesError, ValueError):
    """Argument outside the mathematical domain of the operation."""


class ShapeError(InfoGamesError, ValueError):
    """Array dimensions do not agree."""


class InfeasibleError(InfoGamesError):
    """No feasible point exists for the requested constraint."""


class ConfigurationError(InfoGamesError, ValueError):
    """Discretisation parameters violate a stability requirement."""


class FitDegenerateError(InfoGamesError):
    """Least-squares problem is rank deficient for the supplied data."""
