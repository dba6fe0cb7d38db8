"""Exception types shared across the package."""


class ReflectSimError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(ReflectSimError):
    """A point's dimension does not match the domain's."""


class NonUniqueProjectionError(ReflectSimError):
    """Nearest-boundary-point requested outside the uniqueness tube."""


class NotOnBoundaryError(ReflectSimError):
    """A boundary-only operation was called at an off-boundary point."""


class InvalidReflectionError(ReflectSimError):
    """Reflection direction is tangential or points out of the domain."""


class OutsideValidityError(ReflectSimError):
    """A coefficient field was evaluated outside its declared validity region."""


class CoarseStepError(ReflectSimError):
    """A projection step landed outside the uniqueness tube; dt is too coarse."""


class ConfigError(ReflectSimError):
    """Experiment configuration is invalid.

    ``location`` anchors the message to a config key path (or a line number
    for JSON syntax errors).
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class IncompatibleReferenceError(ConfigError):
    """The requested reference simulator cannot serve this domain/reflection."""
