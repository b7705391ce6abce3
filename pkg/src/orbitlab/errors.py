"""Exception hierarchy shared by all orbitlab modules."""


class OrbitLabError(Exception):
    """Base class for every error raised by the package."""


class BudgetExceeded(OrbitLabError):
    """An enumeration would emit more group elements than its declared budget."""

    def __init__(self, requested, budget, what="elements"):
        self.requested = int(requested)
        self.budget = int(budget)
        super().__init__(f"enumeration of {self.requested} {what} exceeds budget {self.budget}")


class ConfigError(OrbitLabError):
    """Invalid configuration: bad chain, missing parameters, schema violations."""


class ResolutionError(OrbitLabError):
    """A radius is below the resolution of the sampler or metric."""


class UndefinedRegime(OrbitLabError):
    """A rate predictor was called outside the regime where it is meaningful."""


class InvariantViolation(OrbitLabError):
    """A certified bound (Hölder constant, support inclusion, ...) was breached."""

    def __init__(self, message, witness=None):
        self.witness = witness
        super().__init__(message)


class FitError(OrbitLabError):
    """Not enough usable data points to fit a rate."""
