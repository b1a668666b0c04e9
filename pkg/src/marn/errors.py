"""Exception hierarchy shared across the package."""


class MarnError(Exception):
    """Base class for all package errors."""


class ShapeError(MarnError, ValueError):
    pass


class ContractError(MarnError, ValueError):
    """A documented precondition was violated by the caller."""


class FormatError(MarnError):
    """A binary or text artifact does not follow its declared layout."""


class CorruptionError(FormatError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(MarnError, ValueError):
    pass


class DigestMismatchError(MarnError):
    """An artifact was built from a different upstream checkpoint."""


class NumericalError(MarnError, ArithmeticError):
    pass
