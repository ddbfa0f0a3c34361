"""
Three-stage structured encoder over patch tokens Z (B, N, C, D).

s1  detrended attention: queries and keys come from Z minus its moving
    average, values from Z itself; channels never mix.
s2  patch sampling: stride-2 convolution and max-pool branches halve N.
s3  cross-channel attention on time-pooled tokens, broadcast back as an
    additive context.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.autodiff import (
    Module,
    Tensor,
    add,
    concat,
    conv1d,
    layer_norm,
    matmul,
    maxpool1d,
    mean,
    reshape,
    scale,
    softmax,
    sub,
    transpose,
)
from src.autodiff.module import constant_init, uniform_init
from src.config import ModelConfig
from src.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)


def smoothing_kernel(width: int) -> np.ndarray:
    return np.full(width, 1.0 / width)


def smooth_and_detrend(z0: Tensor, width: int = 3) -> Tuple[Tensor, Tensor]:
    """Moving average along N with edge replication; returns (trend, detrended)."""
    if width < 1 or width % 2 == 0:
        raise ConfigError(f"smoothing width must be odd, got {width}")
    by_channel = transpose(z0, (0, 2, 1, 3))
    trend = transpose(conv1d(by_channel, smoothing_kernel(width), stride=1, padding="replicate"), (0, 2, 1, 3))
    return trend, sub(z0, trend)


class IntAttention(Module):
    def __init__(self, d_model: int, heads: int, seed: int = 0, name: str = "int_attn"):
        if d_model % heads:
            raise ConfigError(f"d_model {d_model} is not divisible by heads {heads}")
        self.heads = heads
        self.W_Q = uniform_init(seed, f"{name}.W_Q", (d_model, d_model), fan_in=d_model)
        self.W_K = uniform_init(seed, f"{name}.W_K", (d_model, d_model), fan_in=d_model)
        self.W_V = uniform_init(seed, f"{name}.W_V", (d_model, d_model), fan_in=d_model)
        self.W_O = uniform_init(seed, f"{name}.W_O", (d_model, d_model), fan_in=d_model)
        self.ln_gain = constant_init(f"{name}.ln_gain", (d_model,), 1.0)
        self.ln_bias = constant_init(f"{name}.ln_bias", (d_model,), 0.0)

    def _split(self, x: Tensor, rows: int, n: int, d: int) -> Tensor:
        return transpose(reshape(x, (rows, n, self.heads, d // self.heads)), (0, 2, 1, 3))

    def __call__(self, z0: Tensor, z_det: Tensor) -> Tuple[Tensor, np.ndarray]:
        """Returns Z1 (B, N, C, D) and head-averaged attention maps (B, C, N, N)."""
        b, n, c, d = z0.shape
        rows = b * c
        values = reshape(transpose(z0, (0, 2, 1, 3)), (rows, n, d))
        detrended = reshape(transpose(z_det, (0, 2, 1, 3)), (rows, n, d))

        q = self._split(matmul(detrended, self.W_Q), rows, n, d)
        k = self._split(matmul(detrended, self.W_K), rows, n, d)
        v = self._split(matmul(values, self.W_V), rows, n, d)
        scores = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d // self.heads))
        weights = softmax(scores, axis=-1)
        heads = reshape(transpose(matmul(weights, v), (0, 2, 1, 3)), (rows, n, d))
        z1 = layer_norm(add(values, matmul(heads, self.W_O)), self.ln_gain, self.ln_bias)

        maps = weights.data.mean(axis=1).reshape(b, c, n, n)
        return transpose(reshape(z1, (b, c, n, d)), (0, 2, 1, 3)), maps


class PatchSampling(Module):
    def __init__(self, d_model: int, seed: int = 0, name: str = "sampling"):
        self.conv_kernel = uniform_init(seed, f"{name}.conv_kernel", (3, d_model, d_model), fan_in=3 * d_model)
        self.W_agg = uniform_init(seed, f"{name}.W_agg", (2 * d_model, d_model), fan_in=2 * d_model)

    def __call__(self, z1: Tensor, level: int = 1) -> Tensor:
        """(B, N, C, D) -> (B, N // 2, C, D)."""
        if z1.shape[1] < 2:
            raise ShapeError(
                f"patch sampling at hierarchy level {level} needs at least 2 patches, got {z1.shape[1]}; "
                "the hierarchy depth is too large for this lookback"
            )
        by_channel = transpose(z1, (0, 2, 1, 3))
        conv = conv1d(by_channel, self.conv_kernel, stride=2, padding="replicate")
        pooled = maxpool1d(by_channel, kernel_size=3, stride=2)
        fused = matmul(concat([conv, pooled], axis=-1), self.W_agg)
        return transpose(fused, (0, 2, 1, 3))


class CSCA(Module):
    """Single-head attention across channels of time-averaged tokens."""

    def __init__(self, d_model: int, seed: int = 0, name: str = "csca"):
        self.W_q = uniform_init(seed, f"{name}.W_q", (d_model, d_model), fan_in=d_model)
        self.W_k = uniform_init(seed, f"{name}.W_k", (d_model, d_model), fan_in=d_model)
        self.W_v = uniform_init(seed, f"{name}.W_v", (d_model, d_model), fan_in=d_model)

    def __call__(self, z2: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        b, n, c, d = z2.shape
        pooled = mean(z2, axes=1)  # (B, C, D)
        q = matmul(pooled, self.W_q)
        k = matmul(pooled, self.W_k)
        v = matmul(pooled, self.W_v)
        attn = softmax(scale(matmul(q, transpose(k, (0, 2, 1))), 1.0 / np.sqrt(d)), axis=-1)
        context = matmul(attn, v)
        z_final = add(z2, reshape(context, (b, 1, c, d)))
        return z_final, context, attn


@dataclass
class EncoderConfig:
    d_model: int = 64
    heads: int = 8
    kernel: int = 3
    depth: int = 2
    no_csca: bool = False
    no_hierarchy: bool = False
    order: List[str] = field(default_factory=lambda: ["s1", "s2", "s3"])

    @classmethod
    def from_model_config(cls, config: ModelConfig) -> "EncoderConfig":
        return cls(
            d_model=config.d_model,
            heads=config.heads,
            kernel=config.kernel,
            depth=config.depth,
            no_csca=config.no_csca,
            no_hierarchy=config.no_hierarchy,
            order=config.stages,
        )

    @property
    def levels(self) -> int:
        return 1 if self.no_hierarchy else self.depth


@dataclass
class StageOutputs:
    """Intermediate tensors of one forward pass; first-level decomposition is kept
    separately because the analyses read it."""
    z0: Optional[Tensor] = None
    z_trend: Optional[Tensor] = None
    z_det: Optional[Tensor] = None
    z1: Optional[Tensor] = None
    z2: Optional[Tensor] = None
    c_context: Optional[Tensor] = None
    attention: Optional[Tensor] = None
    z_final: Optional[Tensor] = None
    temporal_maps: List[np.ndarray] = field(default_factory=list)
    trends: List[Tensor] = field(default_factory=list)
    details: List[Tensor] = field(default_factory=list)


class StructuredEncoder(Module):
    def __init__(self, config: EncoderConfig, seed: int = 0, name: str = "encoder"):
        self.config = config
        self.attention = [
            IntAttention(config.d_model, config.heads, seed=seed, name=f"{name}.attention.{i}")
            for i in range(config.levels)
        ] if "s1" in config.order else []
        self.sampling = [
            PatchSampling(config.d_model, seed=seed, name=f"{name}.sampling.{i}")
            for i in range(config.levels)
        ] if "s2" in config.order and not config.no_hierarchy else []
        self.csca = CSCA(config.d_model, seed=seed, name=f"{name}.csca") \
            if "s3" in config.order and not config.no_csca else None

    def output_length(self, num_patches: int) -> int:
        n = num_patches
        for level in range(self.config.levels if self.sampling else 0):
            if n < 2:
                raise ConfigError(f"temporal length reaches 0 at hierarchy level {level + 1}")
            n //= 2
        return n

    def __call__(self, z0: Tensor) -> Tuple[Tensor, StageOutputs]:
        stages = StageOutputs(z0=z0)
        z = z0
        last = self.config.levels - 1
        for level in range(self.config.levels):
            for stage in self.config.order:
                if stage == "s1":
                    trend, det = smooth_and_detrend(z, self.config.kernel)
                    z, maps = self.attention[level](z, det)
                    stages.trends.append(trend)
                    stages.details.append(det)
                    stages.temporal_maps.append(maps)
                    if stages.z1 is None:
                        stages.z_trend, stages.z_det, stages.z1 = trend, det, z
                elif stage == "s2" and self.sampling:
                    z = self.sampling[level](z, level=level + 1)
                    if stages.z2 is None:
                        stages.z2 = z
                elif stage == "s3" and self.csca is not None and level == last:
                    z, stages.c_context, stages.attention = self.csca(z)
        stages.z_final = z
        return z, stages
