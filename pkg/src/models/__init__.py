"""
Models package
Pydantic models for run configuration, metric reports and checkpoint headers
"""

from .config import *
from .report import *

__all__ = [
    "DataConfig",
    "ModelConfig",
    "DiffusionConfig",
    "TrainSection",
    "SampleSection",
    "EvalSection",
    "RunSection",
    "RunConfig",
    "TrainConfig",
    "SamplerConfig",
    "config_error",
    "MetricsReport",
    "ArraySpec",
    "CheckpointHeader",
]
