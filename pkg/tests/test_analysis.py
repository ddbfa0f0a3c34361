import dataclasses
import itertools
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.analysis import (
    SpectralProfile,
    attention_map,
    build_ground_truth,
    correlation_matrix,
    decomposition_trace,
    gate_trace,
    latent_diagnostics,
    latent_factors,
    max_off_diagonal,
    mean_off_diagonal,
    mean_periodogram,
    profile_from_arrays,
    random_baseline_iou,
    read_matrix,
    rolling_volatility,
    spectral_profile,
    spectral_profile_batches,
    top_k_edges,
    topology_match,
)
from src.autodiff import Tensor
from src.config import load_run_config
from src.data.calendar import extract_time_features
from src.errors import ConfigError, DataLoadError, ShapeError
from src.model import PESDTSF
from src.model.encoder import smooth_and_detrend
from src.synth import generate, preset
from src.training import bind_dataset, window_views

CONFIGS = Path(__file__).resolve().parents[1] / "data" / "configs"


# spectra ---------------------------------------------------------------------

def test_planted_frequencies_land_in_their_bands():
    t = np.arange(200, dtype=np.float64)
    slow = np.sin(2 * np.pi * 0.05 * t).reshape(1, 200, 1, 1)
    fast = np.sin(2 * np.pi * 0.3 * t).reshape(1, 200, 1, 1)
    profile = profile_from_arrays(slow, fast)
    assert profile.band_share("trend")["low"] > 0.95
    assert profile.band_share("variation")["high"] > 0.95
    assert len(profile.band_rows()) == 6
    assert list(profile.to_frame().columns) == ["frequency", "trend_psd", "variation_psd"]


def test_band_edges_are_half_open():
    energy = SpectralProfile._bands(np.array([0.05, 0.1, 0.2, 0.5]), np.array([1.0, 2.0, 4.0, 8.0]))
    assert energy == {"low": 1.0, "mid": 2.0, "high": 12.0}


def test_zero_signal_has_zero_shares():
    profile = profile_from_arrays(np.zeros((1, 16, 1)), np.zeros((1, 16, 1)))
    assert profile.band_share("trend") == {"low": 0.0, "mid": 0.0, "high": 0.0}


def test_periodogram_needs_two_samples():
    with pytest.raises(ShapeError):
        mean_periodogram(np.zeros((3, 1, 2)))


def test_constant_signal_is_all_in_the_zero_bin():
    profile = profile_from_arrays(np.full((2, 32, 3), 1.5), np.full((2, 32, 3), -2.0))
    assert profile.trend_psd[0] == pytest.approx(2.25, rel=1e-12)
    assert profile.variation_psd[0] == pytest.approx(4.0, rel=1e-12)
    np.testing.assert_allclose(profile.trend_psd[1:], 0.0, atol=1e-20)
    assert profile.band_share("trend")["low"] == pytest.approx(1.0, abs=1e-12)


def test_alternating_signal_is_all_in_the_nyquist_bin():
    alternating = np.tile([1.0, -1.0], 16).reshape(1, 32, 1)
    profile = profile_from_arrays(alternating, alternating)
    assert profile.freqs[-1] == 0.5
    assert profile.trend_psd[-1] == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(profile.trend_psd[:-1], 0.0, atol=1e-20)
    assert profile.band_share("variation")["high"] == pytest.approx(1.0)


def test_band_energies_partition_mean_power(rng):
    trend = rng.normal(size=(3, 50, 2, 4)) + 0.5
    variation = rng.normal(size=(3, 51, 2, 4))
    profile = profile_from_arrays(trend, variation)
    for component, series in (("trend", trend), ("variation", variation)):
        energy = profile.band_energy(component)
        assert all(value >= 0 for value in energy.values())
        assert sum(energy.values()) == pytest.approx(np.mean(series ** 2), rel=1e-6)
        assert sum(profile.band_share(component).values()) == pytest.approx(1.0)


def test_smoothing_separates_slow_and_fast_tokens():
    n = np.arange(200, dtype=np.float64)
    tokens = np.sin(2 * np.pi * 0.05 * n) + np.sin(2 * np.pi * 0.3 * n)
    trend, detrended = smooth_and_detrend(Tensor(tokens.reshape(1, 200, 1, 1)))
    profile = profile_from_arrays(trend.data, detrended.data)
    assert profile.band_share("trend")["low"] > 0.9
    assert profile.band_share("variation")["high"] > 0.9
    assert profile.band_share("trend")["low"] > profile.band_share("variation")["low"]


def test_spectral_config_reads_timestep_frequencies():
    config = load_run_config(CONFIGS / "spectral_synth.cfg")
    assert config.model.stride == 1
    assert config.model.num_patches == 185


def test_planted_trend_stays_in_the_low_band(monkeypatch):
    monkeypatch.delenv("PESD_SEED", raising=False)
    ds = generate(preset("spectral", seed=3, length=1400)).dataset
    config = bind_dataset(load_run_config(CONFIGS / "spectral_synth.cfg"), ds)
    val = window_views(ds, config).segment("val", stride=config.train.eval_stride)
    profile = spectral_profile_batches(PESDTSF(config.model), val.batches(16))
    trend_low = profile.band_share("trend")["low"]
    assert trend_low >= 0.6
    assert trend_low > profile.band_share("variation")["low"]


def test_profile_from_model_stages(tiny_config, tiny_batch):
    model = PESDTSF(tiny_config)
    profile = spectral_profile(model(tiny_batch).stages)
    assert profile.trend_psd.shape == profile.freqs.shape
    pooled = spectral_profile_batches(model, [tiny_batch, tiny_batch])
    np.testing.assert_allclose(pooled.trend_psd, profile.trend_psd, rtol=1e-10)
    without_s1 = PESDTSF(dataclasses.replace(tiny_config, order="s2s3"))
    with pytest.raises(ShapeError):
        spectral_profile(without_s1(tiny_batch).stages)


# topology --------------------------------------------------------------------

def test_read_matrix_with_labels(tmp_path):
    path = tmp_path / "adj.csv"
    path.write_text(",a,b,c\na,0,1,0\nb,0,0,2\nc,0,0,0\n", encoding="utf-8")
    np.testing.assert_array_equal(read_matrix(path), [[0, 1, 0], [0, 0, 2], [0, 0, 0]])
    bare = tmp_path / "bare.csv"
    bare.write_text("0,1\n1,0\n", encoding="utf-8")
    assert read_matrix(bare).shape == (2, 2)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("0,1,0\n1,0,1\n", encoding="utf-8")
    with pytest.raises(DataLoadError):
        read_matrix(ragged)


def test_ground_truth_symmetrizes_and_expands():
    chain = np.array([[0, 1, 0], [0, 0, 3], [0, 0, 0]])
    direct = build_ground_truth(chain, two_hop=False)
    np.testing.assert_array_equal(direct, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    np.testing.assert_array_equal(build_ground_truth(direct, two_hop=False), direct)
    np.testing.assert_array_equal(build_ground_truth(chain), [[0, 1, 1], [1, 0, 1], [1, 1, 0]])
    with pytest.raises(DataLoadError):
        build_ground_truth(np.array([[0, -1], [0, 0]]))
    with pytest.raises(ShapeError):
        build_ground_truth(np.zeros((2, 3)))


def test_direct_truth_is_a_fixed_point_and_expansion_is_one_step():
    path = np.zeros((4, 4))
    for i in range(3):
        path[i, i + 1] = 1.0
    direct = build_ground_truth(path, two_hop=False)
    np.testing.assert_array_equal(build_ground_truth(direct, two_hop=False), direct)
    np.testing.assert_array_equal(direct, direct.T)
    once = build_ground_truth(path)
    np.testing.assert_array_equal(once, once.T)
    assert once[0, 2] == 1 and once[1, 3] == 1
    assert once[0, 3] == 0
    twice = build_ground_truth(once)
    assert twice[0, 3] == 1
    np.testing.assert_array_equal(np.diag(twice), 0)


def test_top_edges_average_both_directions():
    attention = np.array([[0.5, 0.1, 0.4], [0.1, 0.8, 0.1], [0.5, 0.0, 0.5]])
    assert top_k_edges(attention, 1) == [(0, 2)]
    assert top_k_edges(attention, 10) == [(0, 2), (0, 1), (1, 2)]


def test_perfect_and_empty_matches():
    adjacency = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    attention = np.array([[0.2, 0.8, 0.0], [0.9, 0.1, 0.0], [0.3, 0.3, 0.4]])
    report = topology_match(attention, adjacency, k=1)
    assert report.iou == 1.0
    assert report.random_iou == pytest.approx(1 / 3)
    assert report.lift == pytest.approx(3.0)
    assert report.to_dict()["predicted_edges"] == [[0, 1]]
    np.testing.assert_array_equal(np.diag(report.overlay), 1.0 + np.diag(attention))
    with pytest.raises(ShapeError):
        topology_match(attention, np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        topology_match(attention, adjacency, k=0)


def test_random_baseline_matches_enumeration():
    candidates, truth, k = 10, 3, 4
    true_set = set(range(truth))
    scores = []
    for picked in itertools.combinations(range(candidates), k):
        hits = len(true_set & set(picked))
        scores.append(hits / (k + truth - hits))
    assert random_baseline_iou(candidates, truth, k) == pytest.approx(np.mean(scores), abs=1e-12)
    assert random_baseline_iou(10, 10, 10) == pytest.approx(1.0)
    assert random_baseline_iou(0, 0, 3) == 1.0


# latent factors --------------------------------------------------------------

def test_correlation_matrix_edge_cases(rng):
    assert correlation_matrix(rng.normal(size=(10, 1))).tolist() == [[1.0]]
    z = np.column_stack([rng.normal(size=50), np.full(50, 2.0)])
    corr = correlation_matrix(z)
    assert corr[0, 1] == 0.0 and corr[1, 1] == 1.0
    a = rng.normal(size=100)
    corr = correlation_matrix(np.column_stack([a, -a, rng.normal(size=100)]))
    assert max_off_diagonal(corr) == pytest.approx(1.0)
    assert 0.0 < mean_off_diagonal(corr) < 1.0


def test_latent_diagnostics_writes_tables(tiny_config, tiny_batch, batch_factory, tmp_path):
    model = PESDTSF(tiny_config)
    batches = [tiny_batch, batch_factory(tiny_config, size=4, seed=1)]
    z = latent_factors(model, batches)
    assert z.shape == (6, tiny_config.k)
    steps = pd.DataFrame({"step": [1, 2], "l_orth": [0.5, 0.25], "l_mse": [1.0, 0.9]})
    report = latent_diagnostics(model, batches, steps=steps, out_dir=tmp_path)
    assert report["k"] == tiny_config.k
    assert report["final_l_orth"] == 0.25
    assert (tmp_path / "orth_trace.csv").is_file() and (tmp_path / "corr_matrix.csv").is_file()
    with pytest.raises(ConfigError):
        latent_factors(PESDTSF(dataclasses.replace(tiny_config, no_rlc=True)), batches)


# gating ------------------------------------------------------------------------

def test_rolling_volatility_tracks_regime_switch():
    rng = np.random.default_rng(1)
    signal = np.concatenate([0.1 * rng.normal(size=200), 2.0 * rng.normal(size=200)])
    vol = rolling_volatility(signal, window=24)
    assert vol[0] == pytest.approx(0.0, abs=1e-12)
    assert vol[350] > 5 * vol[150]
    np.testing.assert_allclose(rolling_volatility(signal, window=1), 0.0, atol=1e-12)
    with pytest.raises(ConfigError):
        rolling_volatility(signal, window=0)


def test_gate_trace_frame(tiny_config):
    model = PESDTSF(tiny_config)
    stamps = pd.date_range("2016-07-01", periods=72, freq="1h")
    values = np.random.default_rng(0).normal(size=(72, 2))
    frame, corr = gate_trace(model, values, extract_time_features(stamps, "1h"), channel=1)
    assert list(frame.columns) == ["t", "signal", "volatility", "gate"]
    assert len(frame) == 72
    assert np.all((frame["gate"] > 0) & (frame["gate"] < 1))
    assert -1.0 <= corr <= 1.0
    with pytest.raises(ShapeError):
        gate_trace(model, values, extract_time_features(stamps, "1h"), channel=2)
    with pytest.raises(ConfigError):
        gate_trace(PESDTSF(dataclasses.replace(tiny_config, no_period=True)), values, None)


# per-window views --------------------------------------------------------------

def test_decomposition_trace_adds_up(tiny_config, tiny_batch):
    frames = decomposition_trace(PESDTSF(tiny_config), tiny_batch, channel=1, index=1)
    dec = frames["decomposition"]
    np.testing.assert_allclose(dec["trend"] + dec["residual"], dec["input"], atol=1e-12)
    assert len(frames["forecast"]) == tiny_config.horizon
    np.testing.assert_array_equal(frames["forecast"]["y_true"], tiny_batch.Y_gt[1, :, 1])
    with pytest.raises(ShapeError):
        decomposition_trace(PESDTSF(tiny_config), tiny_batch, channel=5)


def test_attention_map_is_row_stochastic(tiny_config, tiny_batch):
    model = PESDTSF(tiny_config)
    mean_map = attention_map(model, [tiny_batch])
    np.testing.assert_allclose(mean_map.sum(axis=1), 1.0, atol=1e-12)
    overlay = attention_map(model, [tiny_batch], overlay_identity=True)
    np.testing.assert_allclose(overlay - mean_map, np.eye(2), atol=1e-15)
    with pytest.raises(ConfigError):
        attention_map(PESDTSF(dataclasses.replace(tiny_config, no_csca=True)), [tiny_batch])
