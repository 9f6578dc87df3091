"""Exception hierarchy shared by every module."""


class InrCompressError(Exception):
    """Base class for all errors raised by this package."""


# archive / package I/O
class FormatError(InrCompressError):
    pass


class MagicMismatch(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class DuplicateName(FormatError):
    pass


class ShapeByteMismatch(FormatError):
    pass


class CorruptPackage(FormatError):
    pass


class IoFailure(InrCompressError, OSError):
    pass


# numerics
class ShapeMismatch(InrCompressError, ValueError):
    pass


class DimensionMismatch(ShapeMismatch):
    pass


class NameMismatch(InrCompressError, ValueError):
    pass


class ZeroNormInput(InrCompressError, ValueError):
    pass


class ZeroDenominator(InrCompressError, ValueError):
    pass


class RankTooLow(InrCompressError, ValueError):
    pass


class TooSmallTensor(InrCompressError, ValueError):
    pass


class DegenerateConstantTensor(InrCompressError, ValueError):
    pass


class DegenerateRange(InrCompressError, ValueError):
    pass


class IndexOutOfRange(InrCompressError, IndexError):
    pass


class TapeMismatch(InrCompressError, ValueError):
    pass


class NonFiniteLoss(InrCompressError, ArithmeticError):
    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class BitsOutOfRange(InrCompressError, ValueError):
    pass


class CorruptCodes(InrCompressError, ValueError):
    pass


class RankOutOfRange(InrCompressError, ValueError):
    pass


class SvdNoConvergence(InrCompressError, ArithmeticError):
    pass


class OutOfBall(InrCompressError, ValueError):
    pass
