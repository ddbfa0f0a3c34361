from src.data.loader import SeriesDataset, load_csv, save_csv
from src.data.calendar import extract_time_features, feature_layout, vocab_sizes
from src.data.windows import (
    SplitSpec,
    WindowBatch,
    WindowDataset,
    SeriesWindows,
    make_windows,
    instance_normalize,
    denormalize,
)

__all__ = [
    "SeriesDataset",
    "load_csv",
    "save_csv",
    "extract_time_features",
    "feature_layout",
    "vocab_sizes",
    "SplitSpec",
    "WindowBatch",
    "WindowDataset",
    "SeriesWindows",
    "make_windows",
    "instance_normalize",
    "denormalize",
]
