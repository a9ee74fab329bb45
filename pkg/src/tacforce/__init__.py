"""Cross-sensor tactile force representation learning.

Synthetic bilateral-grasp data generation for heterogeneous virtual tactile
sensors, canonical binary marker images, a variational encoder/decoder that
learns a patch-wise latent force map without force labels, and a zero-shot
cross-sensor force-estimation harness.
"""

__version__ = "0.1.0"

from .errors import ArtifactMismatch, ConfigError, NumericFailure, UndefinedMetricError

__all__ = [
    "ArtifactMismatch",
    "ConfigError",
    "NumericFailure",
    "UndefinedMetricError",
    "__version__",
]
