"""Context-augmented multimodal sentiment analysis toolkit."""

__version__ = "0.1.0"

from .datamodel import (
    ContextRecord,
    Polarity,
    PolarityDistribution,
    PredictionRecord,
    Sample,
    argmax_label,
)
from .fusion import FusionConfig, delta, fuse_cf, is_hard

__all__ = [
    "ContextRecord",
    "FusionConfig",
    "Polarity",
    "PolarityDistribution",
    "PredictionRecord",
    "Sample",
    "argmax_label",
    "delta",
    "fuse_cf",
    "is_hard",
    "__version__",
]
