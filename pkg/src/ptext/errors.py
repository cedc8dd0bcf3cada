"""Exception hierarchy shared by every ptext module."""


class PTextError(Exception):
    """Base class for all errors raised by ptext."""


class ValidationError(PTextError, ValueError):
    """Input violates a documented precondition."""


class EmptyText(ValidationError):
    pass


class DuplicateClass(ValidationError):
    pass


class EmptyDict(ValidationError):
    pass


class NoCaptionsForClass(ValidationError):
    pass


class ClassTooSmall(ValidationError):
    pass


class EmptySequence(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class NoCache(ValidationError):
    pass


class ZeroVector(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class InvalidLabel(ValidationError):
    pass


class DegenerateLabels(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class ClassWithoutPositives(ValidationError):
    pass


class MissingPlaceholder(ValidationError):
    pass


class MissingFrameFeatures(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class CorruptCheckpoint(ValidationError):
    pass


class VersionMismatch(ValidationError):
    pass


class NonFiniteLoss(PTextError, ArithmeticError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value
