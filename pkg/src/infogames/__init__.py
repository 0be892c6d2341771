"""Information-theoretic games: privacy funnel, fractional mean-field games,
bankruptcy allocation, nested coordination and phase synchronisation."""
from . import bankruptcy, fractional, funnel, fuzzy, kuramoto, mfg, nested, prob
from .errors import (
    ConfigurationError,
    DomainError,
    FitDegenerateError,
    InfeasibleError,
    InfoGamesError,
    ShapeError,
    ValidationError,
)
from .kernels import BACKEND

__all__ = [
    "BACKEND",
    "bankruptcy",
    "fractional",
    "funnel",
    "fuzzy",
    "kuramoto",
    "mfg",
    "nested",
    "prob",
    "ConfigurationError",
    "DomainError",
    "FitDegenerateError",
    "InfeasibleError",
    "InfoGamesError",
    "ShapeError",
    "ValidationError",
]
__version__ = "0.1.0"
