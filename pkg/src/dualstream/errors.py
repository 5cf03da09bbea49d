class DualStreamError(Exception):
    """Base class for every error raised by dualstream."""


class ConfigurationError(DualStreamError):
    """Base class for configuration errors.

    Raised for invalid shapes, indivisible spatial extents, bad config values
    and unknown config keys.
    """


class ScheduleRangeError(ConfigurationError, ValueError):
    """Learning rate requested outside ``[0, total_epochs]``."""


class NumericalError(DualStreamError):
    """An operation produced, or was handed, non-finite values."""


class DegenerateVarianceError(NumericalError):
    """Batch statistics requested over a single element per channel."""


class ContractViolationError(DualStreamError):
    """A caller broke a documented pre-condition (missing grad, non-scalar loss)."""


class IngestionError(DualStreamError):
    """Dataset ingestion failed for a directory or a single file."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class CheckpointError(DualStreamError):
    """Base class for checkpoint read/write failures."""


class CheckpointCorruptError(CheckpointError):
    """The checkpoint is truncated or structurally invalid."""


class CheckpointVersionError(CheckpointError):
    """The checkpoint was written by an unsupported format version."""


class CheckpointConfigMismatchError(CheckpointError):
    """The checkpoint was produced under a different configuration hash."""


class CheckpointWriteError(CheckpointError):
    """Writing a checkpoint failed; training state was not advanced."""


class TrainingAborted(NumericalError):
    """Training stopped because of a non-finite loss or gradient."""

    def __init__(self, message: str, *, epoch: int, step: int):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
