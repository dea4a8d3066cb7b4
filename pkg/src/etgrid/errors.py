"""Exception types shared across the package.

The CLI maps these onto exit-code categories, so keep the hierarchy flat
and stable.
"""


class ConfigError(ValueError):
    """Scenario configuration is malformed or violates an invariant."""


class MatrixEquationError(RuntimeError):
    """A matrix-equation solve failed or its certificate does not hold."""


class ObservabilityError(MatrixEquationError):
    """The (A, C) pair is not observable; no observer gain exists."""


class ConvergenceError(MatrixEquationError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IntegrationDivergedError(RuntimeError):
    """The fixed-step integration produced a non-finite state component."""

    def __init__(self, message, t=None, component=None):
        super().__init__(message)
        self.t = t
        self.component = component


class PacketOrderError(ValueError):
    """An event packet arrived with a timestamp older than the last one."""
