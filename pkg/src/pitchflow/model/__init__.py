"""Acoustic model assembly, predictors and checkpointing."""

from . import checkpoint
from .encoder import TextEncoder
from .network import AcousticModel, ModelConfig, ModelError, SynthesisResult, VARIANTS
from .predictors import (
    DeterministicDurationPredictor,
    StochasticDurationPredictor,
    StochasticPitchPredictor,
    expand_by_duration,
)

__all__ = [
    "AcousticModel", "ModelConfig", "ModelError", "SynthesisResult", "VARIANTS",
    "TextEncoder", "StochasticDurationPredictor", "DeterministicDurationPredictor",
    "StochasticPitchPredictor", "expand_by_duration", "checkpoint",
]
