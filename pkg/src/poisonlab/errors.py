"""Exception types raised by poisonlab components."""


class PoisonlabError(Exception):
    """Base class for all poisonlab errors."""


class BadMagicError(PoisonlabError):
    """An IDX file carries an unexpected magic number."""


class TruncatedFileError(PoisonlabError):
    """A binary file ended before its advertised payload."""


class CountMismatchError(PoisonlabError):
    """Image and label files advertise different sample counts."""


class RecordSizeError(PoisonlabError):
    """A CIFAR binary file length is not a multiple of the record size."""


class LabelRangeError(PoisonlabError):
    """A label byte lies outside the configured class range."""


class EmptyInputError(PoisonlabError):
    """No input files were provided."""


class StratifyError(PoisonlabError):
    """A class is too small to keep at least one sample on each split side."""


class DimensionMismatchError(PoisonlabError):
    """Vector or model dimensions are incompatible."""


class InfeasibleConstraintError(PoisonlabError):
    """The poisoning budget cannot be satisfied by the eligible classes."""


class MaskConstraintError(PoisonlabError):
    """A poisoning mask violates its selection constraint."""


class NonFiniteError(PoisonlabError):
    """A loss or gradient evaluated to NaN or infinity."""


class PoolExhaustedError(PoisonlabError):
    """The refill step ran out of unpooled eligible samples."""
