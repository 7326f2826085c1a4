"""Exception and warning types shared across the package."""


class PoserelError(Exception):
    """Base class for all library errors."""


class InvalidInputError(PoserelError, ValueError):
    """An argument violates a documented precondition."""


class ShapeError(PoserelError, ValueError):
    """Matrix dimensions do not line up."""


class ConfigError(PoserelError, ValueError):
    """A configuration value is out of range or inconsistent."""


class DataError(PoserelError, ValueError):
    """An annotation or feature file is malformed or violates an invariant."""


class FormatError(DataError):
    """A binary container has a bad magic number, version, or truncation."""


class SingularDegreeError(PoserelError, ValueError):
    """A graph node has zero degree and self-loops are disabled."""


class UndefinedMetricError(PoserelError, ValueError):
    """A metric is undefined for the given inputs (e.g. AP with no positives)."""


class TrainingDivergedError(PoserelError, RuntimeError):
    """Training produced a non-finite loss; carries epoch/batch/lr diagnostics."""


class DataWarning(UserWarning):
    """Recoverable data-quality issue (e.g. padded heatmap peaks)."""
