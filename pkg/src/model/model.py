"""
Full forecaster: gate -> patch -> encode -> head -> inverse normalization.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from src.autodiff import Module, Tensor
from src.config import ModelConfig
from src.data.calendar import feature_layout
from src.data.windows import WindowBatch, denormalize
from src.errors import ShapeError
from src.model.embedding import PatchEmbedding, PeriodicGating, modulate
from src.model.encoder import EncoderConfig, StageOutputs, StructuredEncoder
from src.model.head import PredictionHead
from src.rlc.regularizer import RLCProjection

logger = logging.getLogger(__name__)


@dataclass
class ForwardResult:
    y_hat: Tensor
    h_pred: Tensor
    stages: StageOutputs
    gate: Optional[Tensor] = None


class PESDTSF(Module):
    def __init__(self, config: ModelConfig):
        self.config = config.validate()
        seed = config.seed
        layout = feature_layout(config.freq)
        self.gating = None if config.no_period else PeriodicGating(
            [size for _, size in layout],
            config.d_model,
            d_emb=config.d_emb,
            feature_names=[name for name, _ in layout],
            seed=seed,
        )
        self.patch = PatchEmbedding(
            config.patch_len,
            config.stride,
            config.d_model,
            strict_zero_pad=config.strict_zero_pad,
            pad_short_lookback=config.pad_short_lookback,
            seed=seed,
        )
        self.encoder = StructuredEncoder(EncoderConfig.from_model_config(config), seed=seed)
        self.n_eff = self.encoder.output_length(self.patch.num_patches(config.lookback))
        self.head = PredictionHead(self.n_eff, config.d_model, config.horizon, bias=config.head_bias, seed=seed)
        self.rlc = None if config.no_rlc else RLCProjection(config.channels, config.k, seed=seed)
        logger.debug("PESDTSF built: N=%d, N_eff=%d, %d parameters",
                     self.patch.num_patches(config.lookback), self.n_eff, self.num_parameters())

    def gate(self, marks: np.ndarray) -> Optional[Tensor]:
        return None if self.gating is None else self.gating(marks)

    def forward(self, batch: WindowBatch) -> ForwardResult:
        b, length, channels = batch.X.shape
        if channels != self.config.channels or length != self.config.lookback:
            raise ShapeError(
                f"batch (L={length}, C={channels}) does not match model "
                f"(L={self.config.lookback}, C={self.config.channels})"
            )
        x = Tensor.wrap(batch.X)
        gate = None
        if self.gating is not None:
            gate = self.gating(batch.M)
            x = modulate(x, gate, self.config.gamma)
        z0 = self.patch(x)
        z_final, stages = self.encoder(z0)
        h_pred = self.head(z_final)
        y_hat = denormalize(h_pred, batch.mu_X, batch.sigma_X)
        return ForwardResult(y_hat=y_hat, h_pred=h_pred, stages=stages, gate=gate)

    __call__ = forward

    def parameter_groups(self) -> List[str]:
        return sorted({name.split(".")[0] for name, _ in self.named_parameters()})
