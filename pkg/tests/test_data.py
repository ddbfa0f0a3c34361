import numpy as np
import pandas as pd
import pytest

from src.autodiff import Tensor
from src.data import (
    SeriesWindows,
    SplitSpec,
    WindowDataset,
    denormalize,
    extract_time_features,
    feature_layout,
    instance_normalize,
    load_csv,
    make_windows,
    save_csv,
)
from src.errors import ConfigError, DataLoadError, ShapeError


def write(tmp_path, text, name="series.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# load_csv ------------------------------------------------------------------

def test_load_small_file(tmp_path):
    path = write(tmp_path, "date,a,b\n2016-07-01 00:00:00,1,2\n2016-07-01 01:00:00,3,4\n2016-07-01 02:00:00,5,6\n")
    ds = load_csv(path)
    assert ds.values.shape == (3, 2)
    assert ds.freq == "1h"
    assert ds.channel_names == ["a", "b"]
    np.testing.assert_array_equal(ds.values[:, 1], [2.0, 4.0, 6.0])


def test_text_cell_reports_row_and_column(tmp_path):
    path = write(tmp_path, "date,a,b\n2016-07-01 00:00,1,2\n2016-07-01 01:00,3,oops\n")
    with pytest.raises(DataLoadError) as info:
        load_csv(path)
    assert info.value.row == 1
    assert info.value.column == "b"


def test_missing_cell_is_an_error(tmp_path):
    path = write(tmp_path, "date,a\n2016-07-01 00:00,1\n2016-07-01 01:00,\n")
    with pytest.raises(DataLoadError, match="missing value"):
        load_csv(path)


def test_irregular_spacing_needs_allow_gaps(tmp_path):
    path = write(tmp_path, "date,a\n2016-07-01 00:00,1\n2016-07-01 01:00,2\n2016-07-01 03:00,3\n")
    with pytest.raises(DataLoadError, match="irregular"):
        load_csv(path)
    ds = load_csv(path, allow_gaps=True)
    assert ds.freq == "1h"


def test_non_increasing_timestamps(tmp_path):
    path = write(tmp_path, "date,a\n2016-07-01 01:00,1\n2016-07-01 00:00,2\n")
    with pytest.raises(DataLoadError, match="increasing"):
        load_csv(path)


def test_missing_file_and_date_column(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "absent.csv")
    path = write(tmp_path, "time,a\n2016-07-01 00:00,1\n")
    with pytest.raises(DataLoadError, match="date column"):
        load_csv(path)
    assert load_csv(path, date_column="time").length == 1


def test_save_and_load_preserve_values(tmp_path, toy_dataset):
    ds = load_csv(save_csv(toy_dataset, tmp_path / "copy.csv"))
    np.testing.assert_array_equal(ds.values, toy_dataset.values)
    assert ds.freq == toy_dataset.freq


def test_cells_parse_to_the_nearest_double(tmp_path, rng):
    numbers = np.concatenate([rng.normal(size=200) * 10.0 ** rng.integers(-12, 12, size=200),
                              [0.1, 1 / 3, 2.0 ** -1074, 1.7976931348623157e308]])
    cells = [f"{x:.17g}" for x in numbers]
    rows = "".join(f"2016-07-01 {i // 60:02d}:{i % 60:02d}:00,{cell}\n" for i, cell in enumerate(cells))
    ds = load_csv(write(tmp_path, "date,a\n" + rows))
    np.testing.assert_array_equal(ds.values[:, 0], [float(cell) for cell in cells])
    np.testing.assert_array_equal(ds.values[:, 0], numbers)


# calendar ------------------------------------------------------------------

def test_calendar_codes_are_zero_based():
    codes = extract_time_features(pd.DatetimeIndex(["2016-07-01 00:00"]), "1h")
    np.testing.assert_array_equal(codes[0], [6, 0, 4, 0])


def test_midnight_and_late_evening_differ_only_in_hour():
    codes = extract_time_features(pd.DatetimeIndex(["2016-07-01 00:00", "2016-07-01 23:00"]), "1h")
    assert list(codes[0, :3]) == list(codes[1, :3])
    assert codes[0, 3] == 0 and codes[1, 3] == 23


def test_quarter_hour_minute_buckets():
    stamps = pd.date_range("2016-07-01", periods=4, freq="15min")
    assert [name for name, _ in feature_layout("15min")] == ["month", "day", "weekday", "hour", "minute"]
    assert dict(feature_layout("15min"))["minute"] == 4
    np.testing.assert_array_equal(extract_time_features(stamps, "15min")[:, 4], [0, 1, 2, 3])


def test_daily_layout_drops_hour():
    assert [name for name, _ in feature_layout("1D")] == ["month", "day", "weekday"]


def test_codes_within_vocabulary():
    stamps = pd.date_range("2015-01-01", periods=24 * 400, freq="1h")
    codes = extract_time_features(stamps, "1h")
    for k, (_, size) in enumerate(feature_layout("1h")):
        assert codes[:, k].min() >= 0 and codes[:, k].max() < size


# windows -------------------------------------------------------------------

def test_window_count():
    values = np.arange(20, dtype=np.float64).reshape(10, 2)
    marks = np.zeros((10, 4), dtype=np.int64)
    ds = WindowDataset(values, marks, lookback=3, horizon=2)
    assert len(ds) == 6
    x, _, y = ds[5]
    np.testing.assert_array_equal(x[:, 0], [10.0, 12.0, 14.0])
    np.testing.assert_array_equal(y[:, 0], [16.0, 18.0])


def test_non_overlapping_stride():
    values = np.arange(10, dtype=np.float64)[:, None]
    ds = WindowDataset(values, np.zeros((10, 1), dtype=np.int64), lookback=3, horizon=2, stride=5)
    assert len(ds) == 2
    assert ds[1][0][0, 0] == 5.0


def test_short_segment_error_names_required_length():
    with pytest.raises(ConfigError, match="lookback \\+ horizon = 7"):
        WindowDataset(np.zeros((6, 1)), np.zeros((6, 1), dtype=np.int64), lookback=5, horizon=2)


def test_splits_are_chronological(toy_dataset):
    views = SeriesWindows(toy_dataset, lookback=32, horizon=8)
    (a0, a1), (b0, b1), (c0, c1) = views.split.boundaries(toy_dataset.length)
    assert a1 == b0 and b1 == c0 and a0 == 0 and c1 == toy_dataset.length
    for name in ("train", "val", "test"):
        seg = views.segment(name)
        last = seg.start + (len(seg) - 1) * seg.stride + seg.lookback + seg.horizon
        assert last <= seg.stop


def test_split_fractions_must_sum_to_one():
    with pytest.raises(ConfigError):
        SplitSpec(0.5, 0.2, 0.2)


def test_scaler_is_fitted_on_train_only(toy_dataset):
    views = SeriesWindows(toy_dataset, lookback=32, horizon=8)
    stop = views.split.segment(toy_dataset.length, "train")[1]
    np.testing.assert_allclose(views.values[:stop].mean(axis=0), 0.0, atol=1e-12)
    assert abs(views.values[stop:].mean()) > 0.1


def test_batches_are_normalized_and_deterministic(toy_dataset):
    first = list(make_windows(toy_dataset, 32, 8, batch_size=5, shuffle=True, seed=3))
    second = list(make_windows(toy_dataset, 32, 8, batch_size=5, shuffle=True, seed=3))
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.X, b.X)
        assert np.all(np.abs(a.X.mean(axis=1)) < 1e-6)


# normalization ---------------------------------------------------------------

def test_instance_normalize_examples():
    x_norm, mu, sigma = instance_normalize(np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1))
    np.testing.assert_allclose(x_norm[0, :, 0], [-1.2247, 0.0, 1.2247], atol=1e-3)
    assert mu.shape == (1, 1, 1) and sigma.shape == (1, 1, 1)
    const, _, _ = instance_normalize(np.full((1, 4, 2), 7.0))
    np.testing.assert_array_equal(const, 0.0)


def test_normalize_round_trip(rng):
    x = rng.normal(size=(3, 16, 4)) * 10.0 + 5.0
    x_norm, mu, sigma = instance_normalize(x)
    np.testing.assert_allclose(denormalize(x_norm, mu, sigma), x, atol=1e-9)


def test_denormalize_examples():
    mu = np.full((1, 1, 2), 3.0)
    sigma = np.full((1, 1, 2), 2.0)
    np.testing.assert_array_equal(denormalize(np.zeros((1, 4, 2)), mu, sigma), np.full((1, 4, 2), 3.0))
    np.testing.assert_array_equal(denormalize(np.ones((1, 4, 2)), mu, sigma), np.full((1, 4, 2), 5.0))
    tensor = denormalize(Tensor(np.ones((1, 4, 2))), mu, sigma)
    assert isinstance(tensor, Tensor)
    with pytest.raises(ShapeError):
        denormalize(np.zeros((1, 4, 3)), mu, sigma)
