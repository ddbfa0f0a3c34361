"""
Brute-force reference implementations used to cross-check the tensor core.

Everything here is plain numpy with explicit loops and no autodiff, so a
disagreement with the model path points at the model path.
"""
from typing import Tuple

import numpy as np

from src.data.windows import WindowBatch
from src.errors import ConfigError, ShapeError

LAYER_NORM_EPS = 1e-5


def oracle_decompose(series: np.ndarray, width: int = 3) -> Tuple[np.ndarray, np.ndarray]:
    """Centred moving average of a (T,) or (T, D) series with edge replication.

    Taps are summed in window order starting from ``k[0] * x[first]``, the
    same order the convolution path uses, so the two agree bitwise.
    """
    if width < 1 or width % 2 == 0:
        raise ConfigError(f"smoothing width must be odd, got {width}")
    x = np.asarray(series, dtype=np.float64)
    length = x.shape[0]
    k = 1.0 / width
    half = (width - 1) // 2
    trend = np.empty_like(x)
    for t in range(length):
        acc = k * x[min(max(t - half, 0), length - 1)]
        for j in range(1, width):
            acc = acc + k * x[min(max(t - half + j, 0), length - 1)]
        trend[t] = acc
    return trend, x - trend


def oracle_softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a 2-D array, one row at a time."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ShapeError(f"oracle_softmax expects a matrix, got {scores.shape}")
    out = np.empty_like(scores)
    for i in range(scores.shape[0]):
        row = scores[i]
        peak = max(row)
        exps = [np.exp(v - peak) for v in row]
        total = sum(exps)
        out[i] = [e / total for e in exps]
    return out


def oracle_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Single-head scaled dot-product attention with nested loops; returns (output, weights)."""
    q, k, v = (np.asarray(a, dtype=np.float64) for a in (q, k, v))
    n, d = q.shape
    if k.shape != (k.shape[0], d) or v.shape[0] != k.shape[0]:
        raise ShapeError(f"incompatible attention inputs {q.shape}, {k.shape}, {v.shape}")
    m = k.shape[0]
    scores = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            scores[i, j] = sum(q[i, a] * k[j, a] for a in range(d)) / np.sqrt(d)
    weights = oracle_softmax(scores)
    out = np.zeros((n, v.shape[1]))
    for i in range(n):
        for j in range(m):
            out[i] += weights[i, j] * v[j]
    return out, weights


def oracle_pcc(u: np.ndarray, v: np.ndarray) -> float:
    """Pearson correlation of two equal-length vectors by running sums."""
    u = [float(a) for a in np.ravel(u)]
    v = [float(b) for b in np.ravel(v)]
    if len(u) != len(v) or not u:
        raise ShapeError("oracle_pcc expects two non-empty vectors of equal length")
    mu_u = sum(u) / len(u)
    mu_v = sum(v) / len(v)
    num = sum((a - mu_u) * (b - mu_v) for a, b in zip(u, v))
    su = np.sqrt(max(sum((a - mu_u) ** 2 for a in u), 1e-16))
    sv = np.sqrt(max(sum((b - mu_v) ** 2 for b in v), 1e-16))
    return num / (su * sv)


def oracle_int_attention(z0: np.ndarray, z_det: np.ndarray, w_q: np.ndarray, w_k: np.ndarray,
                         w_v: np.ndarray, w_o: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """One-head detrended attention on a single (N, D) sequence, unit LayerNorm gain."""
    q = z_det @ w_q
    k = z_det @ w_k
    v = z0 @ w_v
    heads, _ = oracle_attention(q, k, v)
    x = z0 + heads @ w_o
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        mu = x[i].mean()
        var = ((x[i] - mu) ** 2).mean()
        out[i] = (x[i] - mu) / np.sqrt(var + eps)
    return out


def _matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.matmul(np.ascontiguousarray(a), np.ascontiguousarray(b))


def _softmax_last(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def _layer_norm_last(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = LAYER_NORM_EPS) -> np.ndarray:
    mu = np.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    return xc * (1.0 / np.sqrt(var + eps)) * gain + bias


def _patch_starts(length: int, patch_len: int, stride: int) -> np.ndarray:
    """(N, P) source positions of every patch; short inputs yield one patch."""
    count = (max(length, patch_len) - patch_len) // stride + 1
    return np.array([[i * stride + j for j in range(patch_len)] for i in range(count)], dtype=np.int64)


def _centred_taps(length: int, width: int) -> np.ndarray:
    half = (width - 1) // 2
    return np.array([[min(max(t - half + j, 0), length - 1) for j in range(width)] for t in range(length)],
                    dtype=np.int64)


def patch_linear_reference(model, batch: WindowBatch) -> np.ndarray:
    """Forecast of the maximally ablated model straight from its parameter arrays.

    Valid for a model with gamma 0 (or no gating), no cross-channel stage, a
    single level without sampling and s1 in the order: normalized input is
    patched and projected, passed through one detrended attention block, then
    flattened into the linear head and denormalized.
    """
    config = model.config
    encoder = model.encoder
    if encoder.csca is not None or encoder.sampling or encoder.config.levels != 1:
        raise ConfigError("patch_linear_reference needs no_csca and no_hierarchy")
    if model.gating is not None and config.gamma != 0.0:
        raise ConfigError("patch_linear_reference needs gamma 0 or no_period")

    x = np.asarray(batch.X, dtype=np.float64)
    b, length, c = x.shape
    patch = model.patch
    index = _patch_starts(length, patch.patch_len, patch.stride)
    if length < patch.patch_len:
        if patch.strict_zero_pad:
            x = np.concatenate([x, np.zeros((b, patch.patch_len - length, c))], axis=1)
        else:
            index = np.minimum(index, length - 1)
    z = _matmul(np.transpose(np.take(x, index, axis=1), (0, 1, 3, 2)), patch.W_emb.data)

    if encoder.attention:
        block = encoder.attention[0]
        n, d = z.shape[1], z.shape[3]
        rows, heads = b * c, block.heads
        dh = d // heads

        by_channel = np.transpose(z, (0, 2, 1, 3))
        clipped = _centred_taps(n, config.kernel)
        k = np.full(config.kernel, 1.0 / config.kernel)
        trend = k[0] * by_channel[:, :, clipped[:, 0], :]
        for j in range(1, config.kernel):
            trend = trend + k[j] * by_channel[:, :, clipped[:, j], :]
        z_det = z - np.transpose(trend, (0, 2, 1, 3))

        values = np.transpose(z, (0, 2, 1, 3)).reshape(rows, n, d)
        detrended = np.transpose(z_det, (0, 2, 1, 3)).reshape(rows, n, d)

        def split(a):
            return np.transpose(a.reshape(rows, n, heads, dh), (0, 2, 1, 3))

        q = split(_matmul(detrended, block.W_Q.data))
        kk = split(_matmul(detrended, block.W_K.data))
        v = split(_matmul(values, block.W_V.data))
        scores = _matmul(q, np.transpose(kk, (0, 1, 3, 2))) * float(1.0 / np.sqrt(dh))
        weights = _softmax_last(scores)
        mixed = np.transpose(_matmul(weights, v), (0, 2, 1, 3)).reshape(rows, n, d)
        normed = _layer_norm_last(values + _matmul(mixed, block.W_O.data), block.ln_gain.data, block.ln_bias.data)
        z = np.transpose(normed.reshape(b, c, n, d), (0, 2, 1, 3))

    n, d = z.shape[1], z.shape[3]
    flat = np.transpose(z, (0, 2, 1, 3)).reshape(b, c, n * d)
    h = _matmul(flat, model.head.W_head.data)
    if model.head.b_head is not None:
        h = h + model.head.b_head.data
    h = np.transpose(h, (0, 2, 1))
    return h * np.asarray(batch.sigma_X, dtype=np.float64) + np.asarray(batch.mu_X, dtype=np.float64)
