"""Exception types shared across the package.

The CLI maps these to process exit codes: ConfigError -> 3,
NumericFailure -> 4, ArtifactMismatch -> 5 (I/O errors exit 2).
"""


class ConfigError(ValueError):
    """Bad or unknown configuration value."""


class NumericFailure(RuntimeError):
    """Non-finite loss or other numeric breakdown during training."""


class ArtifactMismatch(RuntimeError):
    """Checkpoint, manifest, or report incompatible with the requested use."""


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given inputs (e.g. zero variance)."""
