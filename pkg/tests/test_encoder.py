import numpy as np
import pytest

from src.autodiff import Tensor
from src.config import ModelConfig
from src.errors import ConfigError, ShapeError
from src.model import CSCA, EncoderConfig, IntAttention, PatchSampling, StructuredEncoder, smooth_and_detrend
from src.synth import oracle_decompose, oracle_int_attention


def random_tokens(rng, b=2, n=6, c=3, d=4):
    return Tensor(rng.normal(size=(b, n, c, d)))


# smoothing -----------------------------------------------------------------

def test_constant_tokens_have_no_residual():
    trend, det = smooth_and_detrend(Tensor(np.full((1, 5, 2, 3), 4.0)))
    np.testing.assert_allclose(trend.data, 4.0, atol=1e-14)
    np.testing.assert_allclose(det.data, 0.0, atol=1e-14)


def test_hand_computed_trend():
    z0 = Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1))
    trend, det = smooth_and_detrend(z0)
    np.testing.assert_allclose(trend.data.ravel(), [4 / 3, 2.0, 3.0, 11 / 3], atol=1e-12)
    np.testing.assert_allclose(det.data.ravel(), [-1 / 3, 0.0, 0.0, 1 / 3], atol=1e-12)


@pytest.mark.parametrize("seed", range(100))
def test_trend_plus_residual_reconstructs_input(seed):
    rng = np.random.default_rng(seed)
    z0 = random_tokens(rng, n=int(rng.integers(1, 12)))
    trend, det = smooth_and_detrend(z0)
    tolerance = 4 * np.spacing(np.maximum(np.abs(z0.data), np.abs(trend.data)))
    assert np.all(np.abs(trend.data + det.data - z0.data) <= tolerance)


def test_matches_direct_moving_average_bitwise(rng):
    z0 = random_tokens(rng, b=1, n=9, c=1, d=5)
    trend, det = smooth_and_detrend(z0, width=5)
    ref_trend, ref_det = oracle_decompose(z0.data[0, :, 0, :], width=5)
    np.testing.assert_array_equal(trend.data[0, :, 0, :], ref_trend)
    np.testing.assert_array_equal(det.data[0, :, 0, :], ref_det)


def test_width_one_is_identity(rng):
    series = rng.normal(size=(7, 2))
    trend, residual = oracle_decompose(series, width=1)
    np.testing.assert_array_equal(trend, series)
    np.testing.assert_array_equal(residual, 0.0)


def test_even_width_rejected():
    with pytest.raises(ConfigError):
        smooth_and_detrend(Tensor(np.zeros((1, 4, 1, 1))), width=2)


# detrended attention -------------------------------------------------------

def test_constant_input_gives_uniform_attention():
    block = IntAttention(4, 2, seed=1)
    z0 = Tensor(np.full((1, 5, 2, 4), 0.7))
    _, det = smooth_and_detrend(z0)
    _, maps = block(z0, det)
    np.testing.assert_allclose(maps, 1 / 5, atol=1e-12)


def test_single_patch_attends_to_itself(rng):
    block = IntAttention(4, 2, seed=1)
    z0 = random_tokens(rng, b=1, n=1, c=2, d=4)
    _, det = smooth_and_detrend(z0)
    z1, maps = block(z0, det)
    np.testing.assert_array_equal(maps, 1.0)
    x = z0.data + z0.data @ block.W_V.data @ block.W_O.data
    mu = x.mean(axis=-1, keepdims=True)
    expected = (x - mu) / np.sqrt(((x - mu) ** 2).mean(axis=-1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(z1.data, expected, atol=1e-12)


def test_channels_do_not_mix(rng):
    block = IntAttention(4, 2, seed=3)
    z0 = random_tokens(rng, b=2, n=5, c=3, d=4)
    perm = [2, 0, 1]
    _, det = smooth_and_detrend(z0)
    z1, _ = block(z0, det)
    zp = Tensor(z0.data[:, :, perm, :])
    _, detp = smooth_and_detrend(zp)
    z1p, _ = block(zp, detp)
    np.testing.assert_allclose(z1p.data, z1.data[:, :, perm, :], atol=1e-12)


def test_heads_must_divide_width():
    with pytest.raises(ConfigError):
        IntAttention(6, 4)


def test_single_head_matches_loop_reference(rng):
    block = IntAttention(4, 1, seed=5)
    z0 = random_tokens(rng, b=1, n=6, c=1, d=4)
    _, det = smooth_and_detrend(z0)
    z1, _ = block(z0, det)
    expected = oracle_int_attention(z0.data[0, :, 0], det.data[0, :, 0], block.W_Q.data, block.W_K.data,
                                    block.W_V.data, block.W_O.data)
    assert np.max(np.abs(z1.data[0, :, 0] - expected)) < 1e-10


# patch sampling --------------------------------------------------------------

def test_sampling_halves_length(rng):
    sampler = PatchSampling(4, seed=2)
    assert sampler(random_tokens(rng, n=4)).shape == (2, 2, 3, 4)
    assert sampler(random_tokens(rng, n=5)).shape == (2, 2, 3, 4)
    np.testing.assert_array_equal(sampler(Tensor(np.zeros((1, 4, 2, 4)))).data, 0.0)


def test_sampling_needs_two_patches(rng):
    with pytest.raises(ShapeError, match="hierarchy"):
        PatchSampling(4)(random_tokens(rng, n=1))


# cross-channel attention ---------------------------------------------------

def test_single_channel_attention_is_one(rng):
    csca = CSCA(4, seed=1)
    z2 = random_tokens(rng, c=1)
    z_final, context, attn = csca(z2)
    np.testing.assert_array_equal(attn.data, 1.0)
    pooled = z2.data.mean(axis=1)
    np.testing.assert_allclose(z_final.data, z2.data + (pooled @ csca.W_v.data)[:, None], atol=1e-12)


def test_identical_channels_attend_uniformly(rng):
    slice_ = rng.normal(size=(1, 4, 1, 4))
    z2 = Tensor(np.repeat(slice_, 3, axis=2))
    _, _, attn = CSCA(4, seed=1)(z2)
    np.testing.assert_allclose(attn.data, 1 / 3, atol=1e-12)


def test_time_constant_tokens_pool_to_slice(rng):
    slice_ = rng.normal(size=(2, 1, 3, 4))
    z2 = Tensor(np.repeat(slice_, 5, axis=1))
    csca = CSCA(4, seed=1)
    _, context, _ = csca(z2)
    # context = softmax(...) @ (H_c W_v); with H_c equal to the slice the value rows match
    values = slice_[:, 0] @ csca.W_v.data
    q = slice_[:, 0] @ csca.W_q.data
    k = slice_[:, 0] @ csca.W_k.data
    scores = q @ np.swapaxes(k, 1, 2) / 2.0
    weights = np.exp(scores - scores.max(axis=-1, keepdims=True))
    weights /= weights.sum(axis=-1, keepdims=True)
    np.testing.assert_allclose(context.data, weights @ values, atol=1e-12)


def test_rows_stochastic_and_context_broadcast(rng):
    z2 = random_tokens(rng, b=3, n=4, c=5, d=4)
    z_final, _, attn = CSCA(4, seed=9)(z2)
    np.testing.assert_allclose(attn.data.sum(axis=-1), 1.0, atol=1e-10)
    diff = z_final.data - z2.data
    np.testing.assert_allclose(diff, np.broadcast_to(diff[:, :1], diff.shape), atol=1e-12)


# full encoder ----------------------------------------------------------------

def test_maximal_ablation_is_one_attention_block(rng):
    config = EncoderConfig(d_model=4, heads=2, depth=1, no_csca=True, no_hierarchy=True)
    encoder = StructuredEncoder(config, seed=4)
    z0 = random_tokens(rng, n=6)
    z_final, stages = encoder(z0)
    _, det = smooth_and_detrend(z0)
    expected, _ = encoder.attention[0](z0, det)
    np.testing.assert_array_equal(z_final.data, expected.data)
    assert stages.z2 is None and stages.attention is None


def test_output_length_after_two_levels():
    config = EncoderConfig(d_model=8, heads=2, depth=2)
    assert StructuredEncoder(config).output_length(89) == 22
    assert ModelConfig().n_eff == 22


def test_depth_too_large_is_config_error():
    with pytest.raises(ConfigError, match="depth"):
        ModelConfig(lookback=32, patch_len=8, stride=8, depth=3).validate()


def test_stage_outputs_are_recorded(rng):
    encoder = StructuredEncoder(EncoderConfig(d_model=4, heads=2, depth=2), seed=1)
    z_final, stages = encoder(random_tokens(rng, n=8))
    assert z_final.shape == (2, 2, 3, 4)
    assert stages.z1.shape == (2, 8, 3, 4)
    assert stages.z2.shape == (2, 4, 3, 4)
    assert stages.attention.shape == (2, 3, 3)
    assert len(stages.temporal_maps) == 2


def test_reordered_stages(rng):
    config = EncoderConfig(d_model=4, heads=2, depth=1, order=["s2", "s1", "s3"])
    z_final, stages = StructuredEncoder(config, seed=1)(random_tokens(rng, n=8))
    assert z_final.shape == (2, 4, 3, 4)
    assert stages.z1.shape == (2, 4, 3, 4)
