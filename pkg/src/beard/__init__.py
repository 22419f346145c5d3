"""Desk-scale encoder re-training with a frozen random-projection quantizer
and teacher distillation, supervised fine-tuning, and an ASR evaluation
harness — pure numpy/scipy, fully deterministic under fixed seeds."""

__version__ = "0.1.0"

from . import autodiff, data, evaluation, features, losses, masking, model, quantizer, trainer
from ._util import BeardError, DataError, NumericError, UnsupportedPrimitiveError

__all__ = [
    "autodiff",
    "data",
    "evaluation",
    "features",
    "losses",
    "masking",
    "model",
    "quantizer",
    "trainer",
    "BeardError",
    "DataError",
    "NumericError",
    "UnsupportedPrimitiveError",
    "__version__",
]
