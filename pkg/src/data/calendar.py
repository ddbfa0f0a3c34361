"""Integer calendar marks per timestamp, zero-based."""
import math
from typing import List, Tuple

import numpy as np
import pandas as pd


def _interval_minutes(freq: str) -> float:
    return pd.Timedelta(freq).total_seconds() / 60.0


def feature_layout(freq: str) -> List[Tuple[str, int]]:
    """(feature name, vocabulary size) pairs in embedding order.

    Daily and coarser data: month, day, weekday. Hourly: adds hour.
    Sub-hourly: adds a minute bucket of width equal to the interval.
    """
    minutes = _interval_minutes(freq)
    layout = [("month", 12), ("day", 31), ("weekday", 7)]
    if minutes < 24 * 60:
        layout.append(("hour", 24))
    if minutes < 60:
        layout.append(("minute", int(math.ceil(60.0 / minutes))))
    return layout


def vocab_sizes(freq: str) -> List[int]:
    return [size for _, size in feature_layout(freq)]


def extract_time_features(timestamps: pd.DatetimeIndex, freq: str) -> np.ndarray:
    """Return a (T, N_freq) int64 matrix of calendar codes."""
    timestamps = pd.DatetimeIndex(timestamps)
    columns = []
    for name, _ in feature_layout(freq):
        if name == "month":
            columns.append(timestamps.month - 1)
        elif name == "day":
            columns.append(timestamps.day - 1)
        elif name == "weekday":
            columns.append(timestamps.weekday)
        elif name == "hour":
            columns.append(timestamps.hour)
        elif name == "minute":
            width = int(_interval_minutes(freq))
            columns.append(timestamps.minute // max(1, width))
    return np.stack([np.asarray(c, dtype=np.int64) for c in columns], axis=1)
