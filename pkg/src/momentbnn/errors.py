"""Exception types raised by the library."""


class ShapeError(ValueError):
    """Array shapes do not match what an operation expects."""


class DomainError(ValueError):
    """An argument lies outside the domain of a function."""


class ConfigError(ValueError):
    """Invalid architecture, training or CLI configuration."""


class CheckpointError(ValueError):
    """A checkpoint could not be read (bad format or version)."""


class NumericalError(ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, components=None):
        super().__init__(message)
        self.epoch = epoch
        self.components = components or {}
