"""Exact ball averages of free-group and lattice actions, their limits and rates."""

__version__ = "0.1.0"

from .errors import (BudgetExceeded, ConfigError, FitError, InvariantViolation,  # noqa: E402
                     OrbitLabError, ResolutionError, UndefinedRegime)

__all__ = ["__version__", "BudgetExceeded", "ConfigError", "FitError", "InvariantViolation",
           "OrbitLabError", "ResolutionError", "UndefinedRegime"]
