"""
Command Handlers Package
One handler per CLI command, each taking the validated run config and the raw arguments
"""

from .train_handlers import *
from .sample_handlers import *
from .eval_handlers import *

__all__ = [
    "handle_train",
    "handle_sample",
    "handle_eval",
]
