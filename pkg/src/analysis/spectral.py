"""
Power spectra of the trend and detrended latent components.

Periodograms use a rectangular window and no detrending, along the patch-time
axis, then average over every other axis. Bands: low f < 0.1,
mid 0.1 <= f < 0.2, high f >= 0.2 (cycles per patch step).
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List

import numpy as np
import pandas as pd
from scipy.signal import periodogram

from src.data.windows import WindowBatch
from src.errors import ShapeError

logger = logging.getLogger(__name__)

BANDS = (("low", 0.0, 0.1), ("mid", 0.1, 0.2), ("high", 0.2, np.inf))


@dataclass
class SpectralProfile:
    freqs: np.ndarray
    trend_psd: np.ndarray
    variation_psd: np.ndarray

    @staticmethod
    def _bands(freqs: np.ndarray, psd: np.ndarray) -> Dict[str, float]:
        return {name: float(psd[(freqs >= lo) & (freqs < hi)].sum()) for name, lo, hi in BANDS}

    def band_energy(self, component: str) -> Dict[str, float]:
        psd = self.trend_psd if component == "trend" else self.variation_psd
        return self._bands(self.freqs, psd)

    def band_share(self, component: str) -> Dict[str, float]:
        energy = self.band_energy(component)
        total = sum(energy.values())
        if total <= 0:
            return {name: 0.0 for name in energy}
        return {name: value / total for name, value in energy.items()}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"frequency": self.freqs, "trend_psd": self.trend_psd,
                             "variation_psd": self.variation_psd})

    def band_rows(self) -> List[Dict[str, float]]:
        rows = []
        for component in ("trend", "variation"):
            energy, share = self.band_energy(component), self.band_share(component)
            for name, _, _ in BANDS:
                rows.append({"component": component, "band": name, "energy": energy[name], "share": share[name]})
        return rows


def mean_periodogram(series: np.ndarray, axis: int = 1):
    """Average rectangular-window periodogram along ``axis`` over all other axes."""
    series = np.asarray(series, dtype=np.float64)
    length = series.shape[axis]
    if length < 2:
        raise ShapeError(f"need at least 2 samples along the time axis, got {length}")
    if length < 8:
        logger.warning("periodogram over only %d samples", length)
    freqs, psd = periodogram(series, fs=1.0, window="boxcar", detrend=False, scaling="spectrum", axis=axis)
    psd = np.moveaxis(psd, axis, 0).reshape(len(freqs), -1).mean(axis=1)
    return freqs, psd


def profile_from_arrays(trend: np.ndarray, variation: np.ndarray, axis: int = 1) -> SpectralProfile:
    freqs, trend_psd = mean_periodogram(trend, axis)
    _, variation_psd = mean_periodogram(variation, axis)
    return SpectralProfile(freqs, trend_psd, variation_psd)


def spectral_profile(stages) -> SpectralProfile:
    """Profile of one forward pass's first-level decomposition (B, N, C, D)."""
    if stages.z_trend is None or stages.z_det is None:
        raise ShapeError("stage outputs carry no decomposition (stage s1 disabled)")
    return profile_from_arrays(stages.z_trend.data, stages.z_det.data, axis=1)


def spectral_profile_batches(model, batches: Iterable[WindowBatch]) -> SpectralProfile:
    """Pool the decomposition over many windows before estimating spectra."""
    trends, details = [], []
    for batch in batches:
        stages = model.forward(batch).stages
        if stages.z_trend is None:
            raise ShapeError("model has no detrended-attention stage")
        trends.append(stages.z_trend.data)
        details.append(stages.z_det.data)
    if not trends:
        raise ShapeError("no windows for spectral analysis")
    windows = sum(t.shape[0] for t in trends)
    if windows < 16:
        logger.warning("spectral profile averaged over only %d windows", windows)
    return profile_from_arrays(np.concatenate(trends), np.concatenate(details), axis=1)
