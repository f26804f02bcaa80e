"""Exception hierarchy shared across the package."""


class TprnnError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TprnnError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(TprnnError):
    """A configuration value is invalid or inconsistent."""


class GraphError(TprnnError):
    """Misuse of the differentiation tape (non-scalar loss, double backward, ...)."""


class DataError(TprnnError):
    """Dataset ingestion or windowing failed."""


class TrainingError(TprnnError):
    """Training produced non-finite values or was otherwise aborted."""


class CheckpointError(TprnnError):
    """Base class for checkpoint load/save failures."""


class CheckpointVersionError(CheckpointError):
    """Manifest declares an unsupported format version."""


class CheckpointShapeError(CheckpointError):
    """Stored parameter shapes disagree with the manifest or requested config."""


class CheckpointTruncatedError(CheckpointError):
    """Parameter payload is shorter than the manifest promises."""


class CheckpointChecksumError(CheckpointError):
    """Parameter payload does not match the manifest checksum."""
