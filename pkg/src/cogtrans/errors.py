"""Shared exception types."""


class CogtransError(Exception):
    """Base for all toolkit errors."""


class InvalidShape(CogtransError, ValueError):
    pass


class EmptyInput(CogtransError, ValueError):
    pass


class InvalidArgument(CogtransError, ValueError):
    pass


class MissingGrad(CogtransError, RuntimeError):
    pass


class DivergedError(CogtransError, RuntimeError):
    def __init__(self, epoch, message=None):
        super().__init__(message or f"training diverged at epoch {epoch}")
        self.epoch = epoch


class ParseError(CogtransError, ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnmappedSymbol(CogtransError, ValueError):
    def __init__(self, symbol, offset):
        super().__init__(f"unmapped symbol {symbol!r} at offset {offset}")
        self.symbol = symbol
        self.offset = offset


class InvalidAttention(CogtransError, ValueError):
    pass


class IncompatibleCheckpoint(CogtransError, RuntimeError):
    pass


class ChecksumError(CogtransError, RuntimeError):
    pass
