"""Gate intensity against local volatility of the input signal."""
import logging
from typing import Tuple

import numpy as np
import pandas as pd

from src.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)


def rolling_volatility(signal: np.ndarray, window: int = 24) -> np.ndarray:
    """Population std over a trailing window (shorter at the start)."""
    if window < 1:
        raise ConfigError("rolling window must be >= 1")
    return pd.Series(np.asarray(signal, dtype=np.float64)).rolling(window, min_periods=1).std(ddof=0).to_numpy()


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / denom) if denom > 1e-12 else 0.0


def gate_trace(model, values: np.ndarray, marks: np.ndarray, channel: int = 0,
               window: int = 24) -> Tuple[pd.DataFrame, float]:
    """Per-timestep (t, signal, volatility, gate) and the volatility/gate correlation.

    Args:
        model: forecaster with a gating module (gamma may be 0).
        values: (T, C) series.
        marks: (T, N_freq) calendar codes for the same timestamps.
    """
    if model.gating is None:
        raise ConfigError("model was built without periodic gating (no_period)")
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or not 0 <= channel < values.shape[1]:
        raise ShapeError(f"channel {channel} not available in values of shape {values.shape}")
    gate = model.gate(np.asarray(marks)[None]).data[0, :, 0]
    signal = values[:, channel]
    volatility = rolling_volatility(signal, window)
    frame = pd.DataFrame({"t": np.arange(len(signal)), "signal": signal, "volatility": volatility, "gate": gate})
    corr = _pearson(volatility, gate)
    logger.info("Gate/volatility correlation on channel %d: %.4f", channel, corr)
    return frame, corr
