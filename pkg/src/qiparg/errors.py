"""Exception hierarchy shared by all modules."""


class QipArgError(Exception):
    """Base class for every error raised by this package."""


class IndexOutOfRange(QipArgError, IndexError):
    pass


class DimensionMismatch(QipArgError, ValueError):
    pass


class TooLarge(QipArgError, ValueError):
    pass


class RangeError(QipArgError, ValueError):
    pass


class NotHermitian(QipArgError, ValueError):
    pass


class YFreeViolation(QipArgError, ValueError):
    pass


class ZeroMatrix(QipArgError, ValueError):
    pass


class UnsupportedGate(QipArgError, ValueError):
    pass


class TooFewGates(QipArgError, ValueError):
    pass


class EmptyHamiltonian(QipArgError, ValueError):
    pass


class PaddingExhausted(QipArgError, ValueError):
    pass


class MissingOutcome(QipArgError, ValueError):
    pass


class LayoutError(QipArgError, ValueError):
    pass


class TooManyCoins(QipArgError, ValueError):
    pass


class GapNonpositive(QipArgError, ValueError):
    pass


class InvalidIndex(QipArgError, ValueError):
    pass


class ExtractorUnavailable(QipArgError, RuntimeError):
    pass


class ProtocolViolation(QipArgError, RuntimeError):
    pass


class ParseError(QipArgError, ValueError):
    """Malformed input file; carries the offending file name and line number."""

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)
