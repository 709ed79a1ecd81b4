"""Exception hierarchy shared by every module."""


class HanatomyError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(HanatomyError, ValueError):
    """An argument broke a documented precondition (shape, symmetry, ...)."""


class RankDeficientError(ContractViolation):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"column {column} is linearly dependent on earlier columns")


class DataError(HanatomyError, ValueError):
    """Input data is malformed: non-finite values, bad labels, empty classes."""


class FormatError(DataError):
    """A file does not follow its declared on-disk format."""


class ConfigError(HanatomyError, ValueError):
    """Invalid configuration (layer sizes, training knobs, run config)."""


class ResourceLimitError(HanatomyError, MemoryError):
    """A computation was refused because it would exceed a size limit."""

    def __init__(self, message, required=None, limit=None):
        self.required = required
        self.limit = limit
        super().__init__(message)


class TrainingDivergence(HanatomyError, FloatingPointError):
    def __init__(self, epoch, batch, loss):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
