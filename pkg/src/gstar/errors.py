"""Exception hierarchy.

Every failure the CLI can surface derives from :class:`GstarError`; the CLI
prints the class name as the machine-readable error token.
"""


class GstarError(Exception):
    """Base class for all package errors."""


class ConstantSeriesError(GstarError, ValueError):
    """A location has zero sample variance over the standardization window."""

    def __init__(self, location):
        self.location = location
        super().__init__(f"location {location!r} has zero standard deviation")


class AllFilteredError(GstarError, ValueError):
    pass


class WindowTooShortError(GstarError, ValueError):
    pass


class NonConvergenceError(GstarError, RuntimeError):
    def __init__(self, message, estimate=None):
        self.estimate = estimate
        super().__init__(message)


class UnstableModelError(GstarError, ValueError):
    pass


class FailedToStabilizeError(GstarError, RuntimeError):
    pass


class AllZeroActualsError(GstarError, ValueError):
    pass


class EmptyInputError(GstarError, ValueError):
    pass


class UnparseableRecordError(GstarError, ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigError(GstarError, ValueError):
    pass
