"""
Synthetic multivariate series with planted structure.

    x_c(t) = slope_c * t + sum_d coupling[c, d] * driver_d(t - lag_c) + daily(t) + noise_c(t)
    driver_d(t) = amplitude_d * sin(2 pi f_d t + phase_d + walk_d(t))

walk_d is a Gaussian random walk with step std ``phase_noise`` (0 gives a pure
sinusoid) and daily(t) a clock-locked cycle of 24 samples.

Noise is Gaussian from numpy's PCG64 bit generator seeded with ``seed``
(``Generator(PCG64(seed)).standard_normal((T, C))``); phase walks draw from
a second stream seeded with ``[seed, 1]``, so a given spec always
reproduces the same file.
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from src.data.loader import SeriesDataset, save_csv
from src.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class Driver:
    frequency: float
    amplitude: float = 1.0
    phase: float = 0.0
    phase_noise: float = 0.0


@dataclass
class SynthSpec:
    channels: int
    length: int
    drivers: List[Driver]
    coupling: np.ndarray
    slopes: Optional[np.ndarray] = None
    lags: Optional[np.ndarray] = None
    daily_amplitude: float = 0.0
    noise_std: float = 0.1
    seed: int = 2021
    start: str = "2016-07-01 00:00:00"
    freq: str = "1h"
    name: str = "synthetic"

    def __post_init__(self):
        self.coupling = np.asarray(self.coupling, dtype=np.float64)
        self.slopes = np.zeros(self.channels) if self.slopes is None else np.asarray(self.slopes, dtype=np.float64)
        self.lags = np.zeros(self.channels, dtype=np.int64) if self.lags is None else np.asarray(self.lags, dtype=np.int64)
        self.validate()
        norms = np.linalg.norm(self.coupling, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        self.coupling = self.coupling / norms

    def validate(self) -> None:
        if self.channels < 1 or self.length < 2:
            raise ConfigError("synthetic series needs channels >= 1 and length >= 2")
        if self.coupling.shape != (self.channels, len(self.drivers)):
            raise ConfigError(f"coupling must be ({self.channels}, {len(self.drivers)}), got {self.coupling.shape}")
        if self.slopes.shape != (self.channels,):
            raise ConfigError(f"slopes must have length {self.channels}")
        if self.lags.shape != (self.channels,) or np.any(self.lags < 0):
            raise ConfigError(f"lags must be {self.channels} non-negative integers")
        for d in self.drivers:
            if not 0.0 < d.frequency < 0.5:
                raise ConfigError(f"driver frequency {d.frequency} outside (0, 0.5)")
            if d.phase_noise < 0:
                raise ConfigError("driver phase_noise must be >= 0")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")


@dataclass
class SynthResult:
    spec: SynthSpec
    dataset: SeriesDataset
    trend: np.ndarray
    seasonal: np.ndarray
    noise: np.ndarray
    adjacency: np.ndarray = field(default=None)

    def truth(self) -> Dict[str, object]:
        spec = self.spec
        return {
            "name": spec.name,
            "seed": spec.seed,
            "noise_std": spec.noise_std,
            "drivers": [asdict(d) for d in spec.drivers],
            "coupling": spec.coupling.tolist(),
            "slopes": spec.slopes.tolist(),
            "lags": spec.lags.tolist(),
            "daily_amplitude": spec.daily_amplitude,
            "adjacency": self.adjacency.tolist(),
            "trend": self.trend.tolist(),
            "seasonal": self.seasonal.tolist(),
        }

    def save(self, path: Union[str, Path]) -> Dict[str, Path]:
        """Write ``<path>`` (CSV), ``<stem>.truth.json`` and ``<stem>.adjacency.csv``."""
        path = Path(path)
        csv_path = save_csv(self.dataset, path)
        truth_path = path.with_name(f"{path.stem}.truth.json")
        truth_path.write_text(json.dumps(self.truth()), encoding="utf-8")
        adjacency_path = path.with_name(f"{path.stem}.adjacency.csv")
        pd.DataFrame(self.adjacency).to_csv(adjacency_path, index=False, header=False)
        logger.info("Wrote %s (+ truth, adjacency)", csv_path)
        return {"csv": csv_path, "truth": truth_path, "adjacency": adjacency_path}


def adjacency_from_coupling(coupling: np.ndarray) -> np.ndarray:
    """Channels are linked when they load on a common driver."""
    shared = (np.abs(coupling) > 0).astype(np.int64)
    adjacency = ((shared @ shared.T) > 0).astype(np.int64)
    np.fill_diagonal(adjacency, 0)
    return adjacency


def driver_paths(spec: SynthSpec, t: np.ndarray) -> np.ndarray:
    """(len(t), drivers) driver values; phase walks are anchored at the first sample."""
    if not spec.drivers:
        return np.zeros((len(t), 0))
    walk_rng = np.random.Generator(np.random.PCG64([spec.seed, 1]))
    columns = []
    for d in spec.drivers:
        phase = 2.0 * np.pi * d.frequency * t + d.phase
        if d.phase_noise > 0:
            phase = phase + np.cumsum(walk_rng.normal(0.0, d.phase_noise, len(t)))
        columns.append(d.amplitude * np.sin(phase))
    return np.stack(columns, axis=1)


def generate(spec: SynthSpec) -> SynthResult:
    t = np.arange(spec.length, dtype=np.float64)
    trend = t[:, None] * spec.slopes[None, :]
    max_lag = int(spec.lags.max())
    drivers = driver_paths(spec, np.arange(-max_lag, spec.length, dtype=np.float64))
    if max_lag == 0:
        seasonal = drivers @ spec.coupling.T
    else:
        rows = max_lag + np.arange(spec.length)[:, None] - spec.lags[None, :]
        seasonal = np.einsum("tcd,cd->tc", drivers[rows], spec.coupling)
    if spec.daily_amplitude:
        seasonal = seasonal + spec.daily_amplitude * np.sin(2.0 * np.pi * t / 24.0)[:, None]
    noise = np.random.Generator(np.random.PCG64(spec.seed)).standard_normal((spec.length, spec.channels))
    noise *= spec.noise_std
    values = trend + seasonal + noise
    timestamps = pd.date_range(spec.start, periods=spec.length, freq=pd.Timedelta(spec.freq))
    dataset = SeriesDataset(
        timestamps=timestamps,
        values=values,
        channel_names=[f"ch{c}" for c in range(spec.channels)],
        freq=spec.freq,
    )
    return SynthResult(spec=spec, dataset=dataset, trend=trend, seasonal=seasonal, noise=noise,
                       adjacency=adjacency_from_coupling(spec.coupling))


def solar_spec(seed: int = 2021, length: int = 2000) -> SynthSpec:
    """Eight channels sharing a daily cycle at different loadings."""
    rng = np.random.default_rng(seed)
    channels = 8
    drivers = [Driver(1.0 / 24.0, 1.0, 0.0), Driver(1.0 / 12.0, 0.3, 0.5)]
    coupling = np.column_stack([rng.uniform(0.5, 1.0, channels), rng.uniform(0.0, 0.3, channels)])
    return SynthSpec(channels=channels, length=length, drivers=drivers, coupling=coupling,
                     noise_std=0.1, seed=seed, name="solar")


def coupled_spec(seed: int = 2021, length: int = 2000, pairs: int = 5) -> SynthSpec:
    """2 * ``pairs`` channels; channels 2i and 2i+1 share driver i and nothing else."""
    rng = np.random.default_rng(seed)
    frequencies = [1.0 / 48.0, 1.0 / 24.0, 1.0 / 16.0, 1.0 / 12.0, 1.0 / 8.0, 1.0 / 6.0, 1.0 / 5.0, 1.0 / 4.0]
    if pairs > len(frequencies):
        raise ConfigError(f"at most {len(frequencies)} driver pairs are supported")
    drivers = [Driver(frequencies[i], 1.0, float(rng.uniform(0, 2 * np.pi))) for i in range(pairs)]
    coupling = np.zeros((2 * pairs, pairs))
    for i in range(pairs):
        coupling[2 * i, i] = 1.0
        coupling[2 * i + 1, i] = 1.0
    return SynthSpec(channels=2 * pairs, length=length, drivers=drivers, coupling=coupling,
                     noise_std=0.1, seed=seed, name="coupled")


def spectral_spec(seed: int = 2021, length: int = 2000, channels: int = 4) -> SynthSpec:
    """Slow 0.03-cycle trend plus a fast 0.3-cycle seasonal component in every channel.

    Frequencies are per timestep; read the latent spectra with a patch stride of
    1 (data/configs/spectral_synth.cfg) so they keep their bands on the patch axis.
    """
    drivers = [Driver(0.03, 2.0, 0.0), Driver(0.3, 1.0, 0.0)]
    coupling = np.ones((channels, 2))
    return SynthSpec(channels=channels, length=length, drivers=drivers, coupling=coupling,
                     noise_std=0.1, seed=seed, name="spectral")


def leadlag_spec(seed: int = 2021, length: int = 2000, pairs: int = 4, lag: int = 12) -> SynthSpec:
    """Pairs of channels where the odd channel replays its partner ``lag`` steps late.

    Drivers drift in phase, so a channel's own history does not pin its future;
    the leading partner's recent past does. A clock-locked daily cycle is shared
    by every channel.
    """
    rng = np.random.default_rng(seed)
    frequencies = [1.0 / 40.0, 1.0 / 28.0, 1.0 / 20.0, 1.0 / 14.0, 1.0 / 10.0]
    if pairs > len(frequencies):
        raise ConfigError(f"at most {len(frequencies)} driver pairs are supported")
    drivers = [Driver(frequencies[i], 1.0, float(rng.uniform(0, 2 * np.pi)), phase_noise=0.1) for i in range(pairs)]
    coupling = np.zeros((2 * pairs, pairs))
    lags = np.zeros(2 * pairs, dtype=np.int64)
    for i in range(pairs):
        coupling[2 * i, i] = 1.0
        coupling[2 * i + 1, i] = 1.0
        lags[2 * i + 1] = lag
    return SynthSpec(channels=2 * pairs, length=length, drivers=drivers, coupling=coupling, lags=lags,
                     daily_amplitude=0.5, noise_std=0.2, seed=seed, name="leadlag")


PRESETS = {"solar": solar_spec, "coupled": coupled_spec, "spectral": spectral_spec, "leadlag": leadlag_spec}


def preset(name: str, seed: int = 2021, length: int = 2000) -> SynthSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown synthetic preset '{name}', expected one of {sorted(PRESETS)}")
    return PRESETS[name](seed=seed, length=length)
