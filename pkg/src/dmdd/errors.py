"""Exception types shared across the package."""


class DmddError(Exception):
    """Base class for all package-specific errors."""


class EmptySupportError(DmddError):
    """Requested waveform delay leaves no samples inside the receive window."""


class GridRangeError(DmddError):
    """A range-grid point falls outside the receive window."""

    def __init__(self, index: int, range_m: float, limit_m: float):
        self.index = index
        self.range_m = range_m
        self.limit_m = limit_m
        super().__init__(
            f"grid point {index} at {range_m:.3f} m exceeds the receive window "
            f"(max {limit_m:.3f} m)"
        )


class SingularKernelError(DmddError):
    """Diffusion kernel quantity requested at a time where it is undefined."""


class FactorizationError(DmddError):
    """A covariance factorization failed even after jitter."""


class TrainingDivergedError(DmddError):
    """Training produced a non-finite loss."""


class DatasetFormatError(DmddError):
    """Base class for jamming-dataset file problems."""

    code = "format"


class DatasetVersionError(DatasetFormatError):
    code = "version-mismatch"


class DatasetTruncatedError(DatasetFormatError):
    code = "truncated-payload"


class DatasetLengthError(DatasetFormatError):
    """Per-sample length in the file disagrees with what the caller expects."""

    code = "length-mismatch"


class DatasetCountError(DatasetFormatError):
    """Header sample count disagrees with the payload size."""

    code = "count-mismatch"


class CheckpointError(DmddError):
    """Base class for checkpoint file problems."""


class ChecksumError(CheckpointError):
    """Parameter payload does not match its recorded CRC."""


class ArchitectureMismatchError(CheckpointError):
    """Checkpoint architecture is incompatible with the requesting context."""
