"""Weakly supervised class-incremental semantic segmentation."""

from ._core import *  # noqa: F401,F403
from ._core import (  # noqa: F401
    ConfigError,
    Error,
    IoError,
    MetricError,
    MissingArtifactError,
    NumericError,
    OracleError,
    RangeError,
    ValidationError,
)

__version__ = "0.1.0"
