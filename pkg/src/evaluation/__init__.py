from src.evaluation.metrics import (
    mse,
    mae,
    mape,
    rmse,
    all_metrics,
    naive_baselines,
    repeat_last,
    window_mean,
)

__all__ = [
    "mse",
    "mae",
    "mape",
    "rmse",
    "all_metrics",
    "naive_baselines",
    "repeat_last",
    "window_mean",
]
