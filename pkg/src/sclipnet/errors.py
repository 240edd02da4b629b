"""Exception types raised across the package."""


class SclipnetError(Exception):
    """Base class for all package errors."""


class NonConvergence(SclipnetError, RuntimeError):
    """A quadrature or iterative routine failed to reach its tolerance."""


class InvalidRange(SclipnetError, ValueError):
    pass


class SamplerNotBuilt(SclipnetError, RuntimeError):
    pass


class DegreeTooLarge(SclipnetError, ValueError):
    pass


class Disconnected(SclipnetError, ValueError):
    pass


class NonStochastic(SclipnetError, ValueError):
    pass


class SingularAggregate(SclipnetError, ValueError):
    pass


class InvalidCurvature(SclipnetError, ValueError):
    pass


class InsufficientData(SclipnetError, ValueError):
    pass


class NonPositiveValues(SclipnetError, ValueError):
    pass


class MismatchedTraces(SclipnetError, ValueError):
    pass


class EmptyGrid(SclipnetError, ValueError):
    pass


class ConfigError(SclipnetError, ValueError):
    """Base for configuration problems."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
