"""Shared exception types."""


class BicrossError(Exception):
    """Base class for all package-specific failures."""


class InvalidParameterError(BicrossError, ValueError):
    """A caller-supplied parameter is out of its documented range."""


class InvalidInputError(BicrossError, ValueError):
    """Input data violates a documented precondition (non-finite, wrong shape, ...)."""


class DegenerateInputError(BicrossError, ValueError):
    """An input is structurally valid but empty where content is required."""


class FormatError(BicrossError, ValueError):
    """A binary container is malformed. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CheckpointError(BicrossError, ValueError):
    """A checkpoint file cannot be loaded (version mismatch or corruption)."""


class SkipSample(BicrossError):
    """Raised when a training sample provides no usable supervision."""


class NonFiniteLoss(BicrossError, ArithmeticError):
    """A loss component evaluated to NaN or infinity; the step must be aborted."""
