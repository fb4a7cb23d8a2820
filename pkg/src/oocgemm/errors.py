"""Exception hierarchy shared by every module of the package."""


class OocError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(OocError, ValueError):
    pass


class IndexOutOfRange(OocError, IndexError):
    pass


class DimensionMismatch(OocError, ValueError):
    pass


class DenseTooLarge(OocError, MemoryError):
    pass


class ParseError(OocError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormat(OocError, ValueError):
    pass


class InsufficientDeviceMemory(OocError):
    pass


class RowTooLarge(OocError):
    def __init__(self, row, needed, available):
        self.row = row
        self.needed = needed
        self.available = available
        super().__init__(f"row {row} needs {needed} bytes but only {available} are available")


class NonAdjacentFragments(OocError):
    pass


class CapacityExceeded(OocError):
    def __init__(self, tier, requested, free):
        self.tier = tier
        self.requested = requested
        self.free = free
        super().__init__(f"{tier}: cannot place {requested} bytes, {free} free")


class BufferNotResident(OocError, KeyError):
    pass


class OperandNotOnDevice(OocError):
    pass


class SameChannelConflict(OocError):
    pass


class NonSquare(OocError, ValueError):
    pass


class NegativeWeight(OocError, ValueError):
    pass


class InvalidDensity(OocError, ValueError):
    pass
