from .embedding import PeriodicGating, PatchEmbedding, modulate
from .encoder import (
    CSCA,
    EncoderConfig,
    IntAttention,
    PatchSampling,
    StageOutputs,
    StructuredEncoder,
    smooth_and_detrend,
)
from .head import PredictionHead, flatten
from .model import PESDTSF, ForwardResult
from .checkpoint import save_checkpoint, load_checkpoint, read_meta
from .predictor import Predictor

__all__ = [
    "PeriodicGating",
    "PatchEmbedding",
    "modulate",
    "CSCA",
    "EncoderConfig",
    "IntAttention",
    "PatchSampling",
    "StageOutputs",
    "StructuredEncoder",
    "smooth_and_detrend",
    "PredictionHead",
    "flatten",
    "PESDTSF",
    "ForwardResult",
    "save_checkpoint",
    "load_checkpoint",
    "read_meta",
    "Predictor",
]
