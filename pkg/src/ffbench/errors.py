"""Exception types shared across the package."""


class FFBenchError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(FFBenchError, ValueError):
    """Operand shapes are incompatible."""


class EmptyMatrixError(FFBenchError, ValueError):
    """Operation requires a nonempty matrix."""


class NonFiniteError(FFBenchError, ArithmeticError):
    """A NaN or Inf appeared where only finite values are allowed."""


class NotSymmetricError(FFBenchError, ValueError):
    """Operation requires a symmetric matrix."""


class ConvergenceError(FFBenchError, ArithmeticError):
    """An iterative solver diverged."""


class GoodnessOverflowError(FFBenchError, ArithmeticError):
    """A goodness formula left the representable range."""


class UnknownGoodnessError(FFBenchError, KeyError):
    """Requested goodness name is not registered."""


class TrainingDivergedError(FFBenchError, ArithmeticError):
    """Training produced a non-finite loss."""


class DataFormatError(FFBenchError, ValueError):
    """On-disk dataset bytes violate the expected format."""


class BadMagicError(DataFormatError):
    """File magic number is not the expected one."""


class TruncatedFileError(DataFormatError):
    """File ends before the header-declared payload."""


class CountMismatchError(DataFormatError):
    """Image and label files disagree on the record count."""


class LabelRangeError(DataFormatError):
    """A label is outside the valid class range."""
