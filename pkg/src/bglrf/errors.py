"""Exception types shared across the package."""


class BglrfError(Exception):
    """Base class for all package errors."""


class ValidationError(BglrfError, ValueError):
    """Inputs violate a documented precondition (shapes, ranges, config)."""


class NumericalError(BglrfError, ArithmeticError):
    """A solver produced non-finite values or an objective blew up."""


class CubeFormatError(BglrfError, ValueError):
    """Malformed HXC1 cube file."""


class BadMagicError(CubeFormatError):
    pass


class TruncatedPayloadError(CubeFormatError):
    pass


class UnknownDtypeError(CubeFormatError):
    pass
