"""Exception hierarchy shared by every cosood module."""


class CosoodError(Exception):
    """Base class for all library errors."""


class ShapeMismatch(CosoodError, ValueError):
    pass


class InvalidGeometry(CosoodError, ValueError):
    pass


class NonFiniteInput(CosoodError, FloatingPointError):
    pass


class NonFiniteGradient(CosoodError, FloatingPointError):
    pass


class BatchTooSmall(CosoodError, ValueError):
    pass


class InvalidClassIndex(CosoodError, IndexError):
    pass


class GraphCycle(CosoodError, RuntimeError):
    pass


class EmptyDataset(CosoodError, ValueError):
    pass


class DivergedLoss(CosoodError, FloatingPointError):
    pass


class CorruptCheckpoint(CosoodError, ValueError):
    pass


class VersionMismatch(CosoodError, ValueError):
    pass


class BadMagic(CosoodError, ValueError):
    pass


class EmptyScoreSet(CosoodError, ValueError):
    pass


class MixedHeadKinds(CosoodError, ValueError):
    pass


class InvalidParams(CosoodError, ValueError):
    pass


class ConfigError(CosoodError, ValueError):
    """Raised for malformed experiment configs; the message starts with the field path."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
