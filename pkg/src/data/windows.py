"""
Sliding windows, chronological splits and per-window instance normalization.
"""
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
from sklearn.preprocessing import StandardScaler

from src.autodiff import Tensor, add, mul
from src.data.calendar import extract_time_features
from src.data.loader import SeriesDataset
from src.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8
SEGMENTS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2

    def __post_init__(self):
        fractions = (self.train, self.val, self.test)
        if any(f < 0 for f in fractions) or self.train <= 0:
            raise ConfigError(f"split fractions must be non-negative with train > 0, got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fractions)}")

    def boundaries(self, length: int) -> List[Tuple[int, int]]:
        """Contiguous [start, stop) ranges for train, val and test."""
        n_train = int(length * self.train)
        n_val = int(length * self.val)
        return [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, length)]

    def segment(self, length: int, name: str) -> Tuple[int, int]:
        if name not in SEGMENTS:
            raise ConfigError(f"unknown split '{name}', expected one of {SEGMENTS}")
        return self.boundaries(length)[SEGMENTS.index(name)]


def instance_normalize(x_raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standardize each window and channel over the lookback axis (axis 1).

    Returns:
        (normalized, mu, sigma); mu and sigma are B x 1 x C, sigma floored at 1e-8.
    """
    x_raw = np.asarray(x_raw, dtype=np.float64)
    mu = np.mean(x_raw, axis=1, keepdims=True)
    sigma = np.maximum(np.std(x_raw, axis=1, keepdims=True), SIGMA_FLOOR)
    return (x_raw - mu) / sigma, mu, sigma


def denormalize(h_pred, mu, sigma):
    """Y = H * sigma + mu, statistics broadcast along the horizon.

    Accepts numpy arrays or Tensors for ``h_pred``; a Tensor result keeps the
    gradient path.
    """
    shape = h_pred.shape
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if len(shape) != 3 or mu.shape != (shape[0], 1, shape[2]) or sigma.shape != mu.shape:
        raise ShapeError(f"denormalize: prediction {shape} does not fit statistics {mu.shape}/{sigma.shape}")
    if isinstance(h_pred, Tensor):
        return add(mul(h_pred, Tensor.wrap(sigma)), Tensor.wrap(mu))
    return np.asarray(h_pred, dtype=np.float64) * sigma + mu


@dataclass
class WindowBatch:
    X: np.ndarray
    M: np.ndarray
    Y_gt: np.ndarray
    mu_X: np.ndarray
    sigma_X: np.ndarray
    X_raw: np.ndarray

    @classmethod
    def from_raw(cls, x_raw: np.ndarray, marks: np.ndarray, y_gt: np.ndarray) -> "WindowBatch":
        x_norm, mu, sigma = instance_normalize(x_raw)
        return cls(
            X=x_norm,
            M=np.asarray(marks, dtype=np.int64),
            Y_gt=np.asarray(y_gt, dtype=np.float64),
            mu_X=mu,
            sigma_X=sigma,
            X_raw=np.asarray(x_raw, dtype=np.float64),
        )

    @property
    def size(self) -> int:
        return int(self.X.shape[0])


class WindowDataset:
    """Indexable windows over one chronological segment.

    Window ``i`` starts at ``start + i * stride`` and never reads outside
    the segment.
    """

    def __init__(self, values: np.ndarray, marks: np.ndarray, lookback: int, horizon: int,
                 stride: int = 1, start: int = 0, stop: Optional[int] = None, segment: str = "train"):
        stop = values.shape[0] if stop is None else stop
        if lookback < 1 or horizon < 1 or stride < 1:
            raise ConfigError(f"lookback, horizon and stride must be >= 1, got {lookback}, {horizon}, {stride}")
        need = lookback + horizon
        if stop - start < need:
            raise ConfigError(
                f"{segment} segment has {stop - start} steps but a window needs "
                f"lookback + horizon = {need}"
            )
        self.values = values
        self.marks = marks
        self.lookback = lookback
        self.horizon = horizon
        self.stride = stride
        self.start = start
        self.stop = stop
        self.segment = segment

    def __len__(self):
        return (self.stop - self.start - self.lookback - self.horizon) // self.stride + 1

    def __getitem__(self, idx):
        if not 0 <= idx < len(self):
            raise IndexError(f"window {idx} out of range for {len(self)} windows")
        s = self.start + idx * self.stride
        mid = s + self.lookback
        return self.values[s:mid], self.marks[s:mid], self.values[mid:mid + self.horizon]

    def batch(self, indices) -> WindowBatch:
        items = [self[int(i)] for i in indices]
        return WindowBatch.from_raw(
            np.stack([x for x, _, _ in items]),
            np.stack([m for _, m, _ in items]),
            np.stack([y for _, _, y in items]),
        )

    def batches(self, batch_size: int = 32, shuffle: bool = False, seed: int = 0) -> Iterator[WindowBatch]:
        order = np.arange(len(self))
        if shuffle:
            np.random.default_rng(seed).shuffle(order)
        for i in range(0, len(order), batch_size):
            yield self.batch(order[i:i + batch_size])

    def num_batches(self, batch_size: int) -> int:
        return (len(self) + batch_size - 1) // batch_size


class SeriesWindows:
    """Dataset-level view: fitted scaling plus one WindowDataset per split."""

    def __init__(self, ds: SeriesDataset, lookback: int, horizon: int, split: SplitSpec = SplitSpec(),
                 stride: int = 1, scale: bool = True):
        self.ds = ds
        self.split = split
        self.lookback = lookback
        self.horizon = horizon
        self.stride = stride
        self.marks = extract_time_features(ds.timestamps, ds.freq)

        train_start, train_stop = split.segment(ds.length, "train")
        self.scaler: Optional[StandardScaler] = None
        values = ds.values
        if scale:
            self.scaler = StandardScaler().fit(values[train_start:train_stop])
            values = self.scaler.transform(values)
        self.values = np.asarray(values, dtype=np.float64)

    def segment(self, name: str, stride: Optional[int] = None) -> WindowDataset:
        start, stop = self.split.segment(self.ds.length, name)
        return WindowDataset(
            self.values, self.marks, self.lookback, self.horizon,
            stride=self.stride if stride is None else stride,
            start=start, stop=stop, segment=name,
        )


def make_windows(ds: SeriesDataset, lookback: int, horizon: int, stride: int = 1,
                 split: SplitSpec = SplitSpec(), segment: str = "train", batch_size: int = 32,
                 shuffle: bool = False, seed: int = 0, scale: bool = True) -> Iterator[WindowBatch]:
    """Stream WindowBatch objects over one split; deterministic for a given seed."""
    windows = SeriesWindows(ds, lookback, horizon, split=split, stride=stride, scale=scale)
    return windows.segment(segment).batches(batch_size=batch_size, shuffle=shuffle, seed=seed)
