class ACVGError(Exception):
    """Base class for every failure raised by this package."""


class ShapeError(ACVGError, ValueError):
    pass


class GeometryError(ACVGError, ValueError):
    pass


class NoGraphError(ACVGError, RuntimeError):
    pass


class GraphReuseError(ACVGError, RuntimeError):
    pass


class NumericError(ACVGError, ArithmeticError):
    pass


class IncompleteGradientError(ACVGError, RuntimeError):
    pass


class SequenceLengthError(ACVGError, ValueError):
    pass


class InsufficientHistoryError(ACVGError, ValueError):
    pass


class IngestionError(ACVGError, ValueError):
    pass


class ProviderError(ACVGError, IndexError):
    pass


class StreamError(ACVGError, IndexError):
    pass


class DataError(ACVGError, ValueError):
    pass


class WindowError(ACVGError, ValueError):
    pass


class ConfigError(ACVGError, ValueError):
    pass


class CheckpointError(ACVGError, RuntimeError):
    pass


class CheckpointFormatError(CheckpointError, ValueError):
    pass


class CheckpointCorruptionError(CheckpointError, ValueError):
    pass
