"""Exception hierarchy shared by every module."""
from __future__ import annotations


class EcgError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(EcgError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LengthMismatchError(EcgError, ValueError):
    pass


class UnsupportedFormatError(EcgError, ValueError):
    pass


class RangeError(EcgError, ValueError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message)


class OrderingError(EcgError, ValueError):
    pass


class DuplicateIndexError(OrderingError):
    pass


class UnknownSymbolError(EcgError, KeyError):
    def __init__(self, symbols):
        self.symbols = sorted(set(symbols))
        super().__init__(f"unknown beat symbol(s): {', '.join(map(repr, self.symbols))}")

    def __str__(self) -> str:
        return self.args[0]


class ParameterError(EcgError, ValueError):
    pass


class LevelError(EcgError, ValueError):
    pass


class StructureError(EcgError, ValueError):
    pass


class ConstantFrameError(EcgError, ValueError):
    pass


class TooShortError(EcgError, ValueError):
    pass


class EmptyInputError(EcgError, ValueError):
    pass


class ShapeError(EcgError, ValueError):
    pass


class GraphError(EcgError, RuntimeError):
    pass


class DataError(EcgError, ValueError):
    pass


class NumericError(EcgError, ArithmeticError):
    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(message)


class CheckpointError(EcgError, ValueError):
    pass
