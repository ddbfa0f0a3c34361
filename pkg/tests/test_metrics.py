import numpy as np
import pytest
from sklearn.metrics import mean_absolute_error, mean_absolute_percentage_error, mean_squared_error

from src.data.windows import WindowBatch
from src.errors import ShapeError
from src.evaluation.metrics import all_metrics, mae, mape, mse, naive_baselines, repeat_last, rmse, window_mean


def test_agrees_with_sklearn(rng):
    y = rng.normal(size=1000) * 4.0 + 10.0
    y_hat = y + rng.normal(size=1000)
    assert abs(mse(y, y_hat) - mean_squared_error(y, y_hat)) < 1e-10
    assert abs(mae(y, y_hat) - mean_absolute_error(y, y_hat)) < 1e-10
    assert abs(rmse(y, y_hat) - np.sqrt(mean_squared_error(y, y_hat))) < 1e-10
    assert abs(mape(y, y_hat) - 100.0 * mean_absolute_percentage_error(y, y_hat)) < 1e-8


def test_perfect_forecast():
    y = np.arange(12, dtype=np.float64).reshape(2, 3, 2) + 1.0
    scores = all_metrics(y, y.copy())
    assert scores == {"mse": 0.0, "mae": 0.0, "mape": 0.0, "rmse": 0.0}


def test_mape_skips_zero_targets():
    assert mape(np.array([0.0, 2.0]), np.array([5.0, 1.0])) == pytest.approx(50.0)
    assert np.isnan(mape(np.zeros(3), np.ones(3)))


def test_shape_checks():
    with pytest.raises(ShapeError):
        mse(np.zeros(3), np.zeros(4))
    with pytest.raises(ShapeError):
        mae(np.zeros(0), np.zeros(0))


def test_naive_forecasts():
    x = np.array([[[1.0], [2.0], [6.0]]])
    np.testing.assert_array_equal(repeat_last(x, 2), [[[6.0], [6.0]]])
    np.testing.assert_array_equal(window_mean(x, 2), [[[3.0], [3.0]]])


def test_white_noise_baselines():
    rng = np.random.default_rng(42)
    batches = []
    for _ in range(20):
        x_raw = rng.normal(size=(50, 48, 2))
        y = rng.normal(size=(50, 12, 2))
        batches.append(WindowBatch.from_raw(x_raw, np.zeros((50, 48, 4), dtype=np.int64), y))
    scores = naive_baselines(batches)
    assert scores["repeat_last"]["mse"] == pytest.approx(2.0, abs=0.1)
    assert scores["global_mean"]["mse"] == pytest.approx(1.0, abs=0.1)
    with pytest.raises(ShapeError):
        naive_baselines([])
