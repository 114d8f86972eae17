"""Exception hierarchy shared across the package."""


class HypertopicError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolationError(HypertopicError):
    """A caller broke an API precondition (geometry/shape/index mismatch)."""


class DataValidationError(HypertopicError):
    """Input data is malformed or inconsistent (corpus, taxonomy, checkpoint)."""


class CheckpointError(DataValidationError):
    """A checkpoint directory is missing, corrupt, or version-incompatible."""


class TrainingStepError(HypertopicError):
    """A training step produced a non-finite loss or gradient.

    ``param`` names the first offending parameter when known.
    """

    def __init__(self, message: str, param: str | None = None):
        super().__init__(message)
        self.param = param
