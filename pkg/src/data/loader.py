"""
CSV loading for multivariate series.

Expected layout: a datetime column (default header ``date``), then one numeric
column per channel. Missing or unparseable cells are load errors; the series
is never imputed.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd

from src.errors import DataLoadError

logger = logging.getLogger(__name__)


@dataclass
class SeriesDataset:
    timestamps: pd.DatetimeIndex
    values: np.ndarray
    channel_names: List[str]
    freq: str

    @property
    def length(self) -> int:
        return int(self.values.shape[0])

    @property
    def channels(self) -> int:
        return int(self.values.shape[1])

    def slice(self, start: int, stop: int) -> "SeriesDataset":
        return SeriesDataset(
            timestamps=self.timestamps[start:stop],
            values=self.values[start:stop],
            channel_names=list(self.channel_names),
            freq=self.freq,
        )


def freq_tag(spacing: pd.Timedelta) -> str:
    """Render a sampling interval as ``'15min'``, ``'1h'`` or ``'1D'``."""
    seconds = int(spacing.total_seconds())
    if seconds <= 0:
        raise DataLoadError(f"non-positive sampling interval {spacing}")
    if seconds % 86400 == 0:
        return f"{seconds // 86400}D"
    if seconds % 3600 == 0:
        return f"{seconds // 3600}h"
    if seconds % 60 == 0:
        return f"{seconds // 60}min"
    return f"{seconds}s"


def load_csv(path: Union[str, Path], date_column: str = "date", allow_gaps: bool = False) -> SeriesDataset:
    """Read a comma-separated series file.

    Args:
        path: CSV file.
        date_column: header of the timestamp column.
        allow_gaps: accept irregular spacing; the smallest step sets ``freq``.

    Returns:
        SeriesDataset with a T x C float matrix.

    Rows are reported zero-based over data rows (the header is not counted).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataLoadError(f"cannot parse {path.name}: {exc}") from exc

    if date_column not in frame.columns:
        raise DataLoadError(f"missing date column '{date_column}' in {path.name}", column=date_column)
    channel_names = [c for c in frame.columns if c != date_column]
    if not channel_names:
        raise DataLoadError(f"{path.name} has no value columns")
    if frame.empty:
        raise DataLoadError(f"{path.name} has no data rows")

    raw_dates = frame[date_column].str.strip()
    timestamps = pd.to_datetime(raw_dates, errors="coerce")
    bad_dates = np.flatnonzero(timestamps.isna().to_numpy())
    if bad_dates.size:
        row = int(bad_dates[0])
        raise DataLoadError(f"unparseable timestamp '{raw_dates.iloc[row]}'", row=row, column=date_column)

    values = np.empty((len(frame), len(channel_names)), dtype=np.float64)
    for j, name in enumerate(channel_names):
        cells = frame[name].str.strip()
        empty = np.flatnonzero((cells == "").to_numpy())
        if empty.size:
            raise DataLoadError("missing value", row=int(empty[0]), column=name)
        parsed = pd.to_numeric(cells, errors="coerce")
        bad = np.flatnonzero(parsed.isna().to_numpy())
        if bad.size:
            row = int(bad[0])
            raise DataLoadError(f"non-numeric cell '{cells.iloc[row]}'", row=row, column=name)
        # Python float() rounds correctly; pandas' fast converter can be 1 ulp off
        values[:, j] = cells.map(float).to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        row, col = np.argwhere(~np.isfinite(values))[0]
        raise DataLoadError("non-finite value", row=int(row), column=channel_names[int(col)])

    index = pd.DatetimeIndex(timestamps)
    if len(index) == 1:
        logger.warning("%s has a single row; assuming hourly spacing", path.name)
        freq = "1h"
    else:
        steps = index[1:] - index[:-1]
        non_increasing = np.flatnonzero(steps <= pd.Timedelta(0))
        if non_increasing.size:
            raise DataLoadError("timestamps are not strictly increasing",
                                row=int(non_increasing[0]) + 1, column=date_column)
        spacing = steps.min()
        irregular = np.flatnonzero(steps != spacing)
        if irregular.size and not allow_gaps:
            raise DataLoadError(
                f"irregular spacing: expected {spacing}, found {steps[irregular[0]]} "
                "(pass --allow-gaps to accept)",
                row=int(irregular[0]) + 1,
                column=date_column,
            )
        if irregular.size:
            logger.warning("%s: %d irregular steps accepted", path.name, irregular.size)
        freq = freq_tag(spacing)

    logger.info("Loaded %s: %d rows x %d channels, freq=%s", path.name, len(index), len(channel_names), freq)
    return SeriesDataset(timestamps=index, values=values, channel_names=channel_names, freq=freq)


def save_csv(ds: SeriesDataset, path: Union[str, Path], date_column: str = "date") -> Path:
    """Write a dataset back in the layout ``load_csv`` expects."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(ds.values, columns=ds.channel_names)
    frame.insert(0, date_column, ds.timestamps.strftime("%Y-%m-%d %H:%M:%S"))
    frame.to_csv(path, index=False, float_format="%.17g")
    return path
