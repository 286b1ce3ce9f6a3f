"""Exception types raised across the package."""


class InvalidDomainError(ValueError):
    """Box bounds or mesh data do not describe a valid domain."""


class PointNotFoundError(LookupError):
    """A query point lies outside every cell of a mesh."""


class ConfigurationError(ValueError):
    """Unsupported or inconsistent configuration (element pair, parameters)."""


class SingularViscosityError(ArithmeticError):
    """The stress law was evaluated where the viscosity blows up."""


class LinearSolveError(RuntimeError):
    """Sparse factorization failed."""


class NonConvergenceError(RuntimeError):
    """An iteration hit its iteration cap; ``trace`` holds the history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DivergenceError(NonConvergenceError):
    """An iteration produced non-finite values."""
