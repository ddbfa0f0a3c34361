"""
Calendar-driven periodic gating and patch embedding.

The gate is computed from calendar marks only and is shared by every channel;
the input is amplified by ``1 + gamma * gate`` before patching.
"""
import logging
from typing import List

import numpy as np

from src.autodiff import (
    Module,
    Tensor,
    add,
    concat,
    embedding_lookup,
    matmul,
    mul,
    scale,
    sigmoid,
    take,
    transpose,
)
from src.autodiff.module import constant_init, normal_init, uniform_init
from src.errors import ShapeError

logger = logging.getLogger(__name__)


class PeriodicGating(Module):
    def __init__(self, vocab_sizes: List[int], d_model: int, d_emb: int = 8, feature_names: List[str] = None,
                 seed: int = 0, name: str = "gating"):
        self.feature_names = list(feature_names or [f"feature{k}" for k in range(len(vocab_sizes))])
        self.tables = [
            normal_init(seed, f"{name}.tables.{k}", (v, d_emb)) for k, v in enumerate(vocab_sizes)
        ]
        width = len(vocab_sizes) * d_emb
        self.W_fuse = uniform_init(seed, f"{name}.W_fuse", (width, d_model), fan_in=width)
        self.W_gate = uniform_init(seed, f"{name}.W_gate", (d_model, 1), fan_in=d_model)
        self.b_gate = constant_init(f"{name}.b_gate", (1,), 0.0)

    def embed_time(self, marks: np.ndarray) -> Tensor:
        """(B, L, N_freq) integer marks -> (B, L, D) fused calendar embedding."""
        marks = np.asarray(marks)
        if marks.ndim != 3 or marks.shape[-1] != len(self.tables):
            raise ShapeError(f"expected marks (B, L, {len(self.tables)}), got {marks.shape}")
        looked_up = [
            embedding_lookup(table, marks[..., k], feature=self.feature_names[k])
            for k, table in enumerate(self.tables)
        ]
        e_cat = concat(looked_up, axis=-1)
        return matmul(e_cat, self.W_fuse)

    def compute_gate(self, e_time: Tensor) -> Tensor:
        """(B, L, D) -> (B, L, 1), strictly inside (0, 1)."""
        return sigmoid(add(matmul(e_time, self.W_gate), self.b_gate))

    def __call__(self, marks: np.ndarray) -> Tensor:
        return self.compute_gate(self.embed_time(marks))


def modulate(x_norm, gate: Tensor, gamma: float) -> Tensor:
    """X' = X_norm * (1 + gamma * G); the (B, L, 1) gate broadcasts over channels."""
    return mul(x_norm, add(1.0, scale(gate, gamma)))


class PatchEmbedding(Module):
    """Overlapping length-P windows with stride S, projected to width D without bias."""

    def __init__(self, patch_len: int, stride: int, d_model: int, strict_zero_pad: bool = False,
                 pad_short_lookback: bool = True, seed: int = 0, name: str = "patch"):
        self.patch_len = patch_len
        self.stride = stride
        self.strict_zero_pad = strict_zero_pad
        self.pad_short_lookback = pad_short_lookback
        self.W_emb = uniform_init(seed, f"{name}.W_emb", (patch_len, d_model), fan_in=patch_len)

    def num_patches(self, lookback: int) -> int:
        return (max(lookback, self.patch_len) - self.patch_len) // self.stride + 1

    def patch_index(self, lookback: int) -> np.ndarray:
        n = self.num_patches(lookback)
        return (np.arange(n) * self.stride)[:, None] + np.arange(self.patch_len)[None, :]

    def __call__(self, x) -> Tensor:
        """(B, L, C) -> (B, N, C, D)."""
        x = x if isinstance(x, Tensor) else Tensor.wrap(np.asarray(x, dtype=np.float64))
        if x.ndim != 3:
            raise ShapeError(f"patchify expects (B, L, C), got {x.shape}")
        batch, length, channels = x.shape
        index = self.patch_index(length)
        if length < self.patch_len:
            if not self.pad_short_lookback:
                raise ShapeError(f"lookback {length} < patch length {self.patch_len} and padding is disabled")
            logger.warning("lookback %d shorter than patch length %d; padding", length, self.patch_len)
            if self.strict_zero_pad:
                x = concat([x, Tensor.wrap(np.zeros((batch, self.patch_len - length, channels)))], axis=1)
            else:
                index = np.minimum(index, length - 1)
        patches = take(x, index, axis=1)  # (B, N, P, C)
        return matmul(transpose(patches, (0, 1, 3, 2)), self.W_emb)
