"""Per-window views: trend/residual trace, forecast and CSCA attention."""
from typing import Dict, Iterable

import numpy as np
import pandas as pd

from src.data.windows import WindowBatch
from src.errors import ConfigError, ShapeError


def decomposition_trace(model, batch: WindowBatch, channel: int = 0, index: int = 0) -> Dict[str, pd.DataFrame]:
    """First-level decomposition of one variable (embedding-averaged) and its forecast."""
    if not 0 <= channel < batch.X.shape[-1] or not 0 <= index < batch.size:
        raise ShapeError(f"channel {channel} / window {index} outside batch {batch.X.shape}")
    result = model.forward(batch)
    stages = result.stages
    if stages.z_trend is None:
        raise ConfigError("model has no detrended-attention stage to trace")
    decomposition = pd.DataFrame({
        "patch": np.arange(stages.z0.shape[1]),
        "input": stages.z0.data[index, :, channel, :].mean(axis=-1),
        "trend": stages.z_trend.data[index, :, channel, :].mean(axis=-1),
        "residual": stages.z_det.data[index, :, channel, :].mean(axis=-1),
    })
    forecast = pd.DataFrame({
        "horizon": np.arange(batch.Y_gt.shape[1]),
        "y_true": batch.Y_gt[index, :, channel],
        "y_pred": result.y_hat.data[index, :, channel],
    })
    return {"decomposition": decomposition, "forecast": forecast}


def attention_map(model, batches: Iterable[WindowBatch], overlay_identity: bool = False) -> np.ndarray:
    """CSCA attention averaged over all windows, (C, C)."""
    if model.encoder.csca is None:
        raise ConfigError("model has no cross-channel attention stage (no_csca)")
    total, count = None, 0
    for batch in batches:
        attn = model.forward(batch).stages.attention.data
        total = attn.sum(axis=0) if total is None else total + attn.sum(axis=0)
        count += attn.shape[0]
    if count == 0:
        raise ShapeError("no windows for the attention map")
    mean_map = total / count
    return mean_map + np.eye(mean_map.shape[0]) if overlay_identity else mean_map
