"""Forecast error metrics on physical-scale values, plus naive baselines."""
from typing import Dict, Iterable

import numpy as np

from src.data.windows import WindowBatch
from src.errors import ShapeError

MAPE_FLOOR = 1e-8


def _pair(y, y_hat):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ShapeError(f"metric inputs differ in shape: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ShapeError("metric inputs are empty")
    return y, y_hat


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    return float(np.sqrt(mse(y, y_hat)))


def mape(y, y_hat) -> float:
    """Mean absolute percentage error; targets with |y| < 1e-8 are left out."""
    y, y_hat = _pair(y, y_hat)
    keep = np.abs(y) >= MAPE_FLOOR
    if not np.any(keep):
        return float("nan")
    return float(np.mean(np.abs((y[keep] - y_hat[keep]) / y[keep])) * 100.0)


def all_metrics(y, y_hat) -> Dict[str, float]:
    return {"mse": mse(y, y_hat), "mae": mae(y, y_hat), "mape": mape(y, y_hat), "rmse": rmse(y, y_hat)}


def repeat_last(x_raw: np.ndarray, horizon: int) -> np.ndarray:
    return np.repeat(x_raw[:, -1:, :], horizon, axis=1)


def window_mean(x_raw: np.ndarray, horizon: int) -> np.ndarray:
    return np.repeat(x_raw.mean(axis=1, keepdims=True), horizon, axis=1)


def naive_baselines(batches: Iterable[WindowBatch]) -> Dict[str, Dict[str, float]]:
    """Metrics of the repeat-last and window-mean forecasts over a batch stream."""
    ys, last, avg = [], [], []
    for batch in batches:
        horizon = batch.Y_gt.shape[1]
        ys.append(batch.Y_gt)
        last.append(repeat_last(batch.X_raw, horizon))
        avg.append(window_mean(batch.X_raw, horizon))
    if not ys:
        raise ShapeError("naive_baselines needs at least one batch")
    y = np.concatenate(ys)
    return {
        "repeat_last": all_metrics(y, np.concatenate(last)),
        "global_mean": all_metrics(y, np.concatenate(avg)),
    }
