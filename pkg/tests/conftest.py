import numpy as np
import pandas as pd
import pytest

from src.config import ModelConfig, RunConfig, TrainConfig
from src.data.calendar import extract_time_features
from src.data.loader import SeriesDataset, save_csv
from src.data.windows import WindowBatch


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_config():
    """L=32, P=8, S=4 -> 7 patches; two sampling levels leave 1."""
    return ModelConfig(lookback=32, horizon=8, channels=2, freq="1h", patch_len=8, stride=4,
                       d_model=8, d_emb=4, heads=2, depth=2, gamma=0.5, seed=7)


def make_batch(config: ModelConfig, size: int = 2, seed: int = 0, start: str = "2016-07-01") -> WindowBatch:
    rng = np.random.default_rng(seed)
    x_raw = rng.normal(size=(size, config.lookback, config.channels)) * 3.0 + 1.5
    y = rng.normal(size=(size, config.horizon, config.channels))
    stamps = pd.date_range(start, periods=config.lookback, freq=config.freq)
    codes = extract_time_features(stamps, config.freq)
    marks = np.broadcast_to(codes, (size,) + codes.shape).copy()
    return WindowBatch.from_raw(x_raw, marks, y)


@pytest.fixture
def batch_factory():
    return make_batch


@pytest.fixture
def tiny_batch(tiny_config):
    return make_batch(tiny_config)


def sine_dataset(length: int = 400, channels: int = 2, seed: int = 0, freq: str = "1h") -> SeriesDataset:
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    values = np.stack(
        [np.sin(2 * np.pi * t / 24.0 + c) + 0.01 * t + 0.1 * rng.normal(size=length) for c in range(channels)],
        axis=1,
    )
    return SeriesDataset(
        timestamps=pd.date_range("2016-07-01", periods=length, freq=freq),
        values=values,
        channel_names=[f"ch{c}" for c in range(channels)],
        freq=freq,
    )


@pytest.fixture
def dataset_factory():
    return sine_dataset


@pytest.fixture
def toy_dataset():
    return sine_dataset()


@pytest.fixture
def toy_csv(tmp_path, toy_dataset):
    return save_csv(toy_dataset, tmp_path / "toy.csv")


@pytest.fixture
def tiny_run_config(tiny_config, toy_csv):
    train = TrainConfig(lr=1e-3, batch_size=8, epochs=2, patience=2, seed=7, window_stride=8, eval_stride=8)
    return RunConfig(data=str(toy_csv), model=tiny_config, train=train)
