"""
Latent-component regularizer.

Channel statistics of the encoder output are projected through a matrix whose
columns are pushed towards orthonormality, and each projected factor is
correlated (across the batch) with the matching pooled statistic of the
targets. The objective is

    total = mse + lambda1 * ||W^T W - I||_F^2 - lambda2 * sum_k pcc(z_k, y_k)
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from src.autodiff import (
    Module,
    Parameter,
    Tensor,
    add,
    clamp_min,
    concat,
    div,
    matmul,
    mean,
    mul,
    reshape,
    scale,
    sqrt,
    std,
    sub,
    sum_,
    transpose,
)
from src.autodiff.module import orthonormal_init
from src.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

PCC_FLOOR = 1e-8


class RLCProjection(Module):
    def __init__(self, channels: int, k: int, seed: int = 0, name: str = "rlc"):
        if not 1 <= k <= 2 * channels:
            raise ConfigError(f"K={k} must satisfy 1 <= K <= 2C = {2 * channels} (rank deficiency otherwise)")
        self.k = k
        self.channels = channels
        self.W_rlc = orthonormal_init(seed, f"{name}.W_rlc", 2 * channels, k)

    def retract(self) -> float:
        """Project W_rlc back onto orthonormal columns; returns the L_orth it had before."""
        before = orth_residual(self.W_rlc.data)
        self.W_rlc.data = retract_orthonormal(self.W_rlc.data)
        return before

    def align(self, f_stat: np.ndarray) -> np.ndarray:
        """Rotate the factors so they are uncorrelated over the rows of ``f_stat``."""
        rotation = principal_rotation(self.W_rlc.data, f_stat)
        self.W_rlc.data = self.W_rlc.data @ rotation
        return rotation


@dataclass
class RLCState:
    W_rlc: Parameter
    k: int
    f_stat: Tensor
    y_pool: np.ndarray
    z_rlc: Tensor


@dataclass
class LossBundle:
    total: Tensor
    l_mse: float
    l_orth: float
    pcc_sum: float
    lambda1: float
    lambda2: float

    @property
    def value(self) -> float:
        return self.total.item()

    def as_row(self) -> dict:
        return {"l_mse": self.l_mse, "l_orth": self.l_orth, "pcc_sum": self.pcc_sum, "total": self.value}


def stat_readout(z_final: Tensor) -> Tensor:
    """(B, N, C, D) -> (B, 2C): [mean over (N, D) || population std over (N, D)]."""
    b, n, c, d = z_final.shape
    if n * d < 1:
        raise ShapeError("stat_readout needs N * D >= 1")
    per_channel = reshape(transpose(z_final, (0, 2, 1, 3)), (b, c, n * d))
    return concat([mean(per_channel, axes=-1), std(per_channel, axes=-1)], axis=-1)


def target_pool(y_gt: np.ndarray) -> np.ndarray:
    """(B, O, C) -> (B, 2C): [mean over O || population std over O]."""
    y_gt = np.asarray(y_gt, dtype=np.float64)
    if y_gt.ndim != 3 or y_gt.shape[1] < 1:
        raise ShapeError(f"target_pool expects (B, O, C) with O >= 1, got {y_gt.shape}")
    return np.concatenate([y_gt.mean(axis=1), y_gt.std(axis=1)], axis=-1)


def project_latent(f_stat: Tensor, w_rlc: Tensor) -> Tensor:
    if f_stat.shape[-1] != w_rlc.shape[0]:
        raise ShapeError(f"F_stat width {f_stat.shape[-1]} != W_rlc rows {w_rlc.shape[0]}")
    return matmul(f_stat, w_rlc)


def orth_loss(w_rlc: Tensor) -> Tensor:
    gram = matmul(transpose(w_rlc, (1, 0)), w_rlc)
    residual = sub(gram, Tensor.wrap(np.eye(w_rlc.shape[1])))
    return sum_(mul(residual, residual))


def pcc_columns(u: Tensor, v) -> Tensor:
    """Pearson correlation of matching columns of (B, K) inputs across the batch axis."""
    v = v if isinstance(v, Tensor) else Tensor.wrap(np.asarray(v, dtype=np.float64))
    if u.shape != v.shape:
        raise ShapeError(f"pcc inputs differ in shape: {u.shape} vs {v.shape}")
    if u.shape[0] < 2:
        raise ShapeError("pcc needs a batch of at least 2")
    uc = sub(u, mean(u, axes=0, keepdims=True))
    vc = sub(v, mean(v, axes=0, keepdims=True))
    num = sum_(mul(uc, vc), axes=0)
    floor_sq = PCC_FLOOR * PCC_FLOOR
    du = sqrt(clamp_min(sum_(mul(uc, uc), axes=0), floor_sq))
    dv = sqrt(clamp_min(sum_(mul(vc, vc), axes=0), floor_sq))
    return div(num, mul(du, dv))


def pcc(u, v) -> Tensor:
    """Scalar Pearson correlation of two length-B vectors."""
    u = u if isinstance(u, Tensor) else Tensor.wrap(np.asarray(u, dtype=np.float64))
    v = v if isinstance(v, Tensor) else Tensor.wrap(np.asarray(v, dtype=np.float64))
    if u.ndim != 1 or v.ndim != 1:
        raise ShapeError("pcc expects two vectors")
    return reshape(pcc_columns(reshape(u, (-1, 1)), reshape(v, (-1, 1))), ())


def rlc_state(z_final: Tensor, y_gt: np.ndarray, projection: RLCProjection) -> RLCState:
    f_stat = stat_readout(z_final)
    return RLCState(
        W_rlc=projection.W_rlc,
        k=projection.k,
        f_stat=f_stat,
        y_pool=target_pool(y_gt),
        z_rlc=project_latent(f_stat, projection.W_rlc),
    )


def mse_loss(y_hat: Tensor, y_gt: np.ndarray) -> Tensor:
    diff = sub(y_hat, Tensor.wrap(np.asarray(y_gt, dtype=np.float64)))
    return mean(mul(diff, diff))


def total_loss(y_hat: Tensor, y_gt: np.ndarray, rlc: Optional[RLCState], lambda1: float,
               lambda2: float) -> LossBundle:
    if lambda1 < 0 or lambda2 < 0:
        raise ConfigError("lambda1 and lambda2 must be >= 0")
    l_mse = mse_loss(y_hat, y_gt)
    total = l_mse
    l_orth_value = 0.0
    pcc_value = 0.0
    if rlc is not None and lambda1 > 0:
        l_orth = orth_loss(rlc.W_rlc)
        l_orth_value = l_orth.item()
        total = add(total, scale(l_orth, lambda1))
    if rlc is not None and lambda2 > 0:
        if rlc.k != rlc.y_pool.shape[-1]:
            raise ConfigError(
                f"K={rlc.k} but pooled targets have {rlc.y_pool.shape[-1]} components; "
                "factor-wise correlation needs K == 2C (use lambda2=0 for smaller K)"
            )
        pcc_sum = sum_(pcc_columns(rlc.z_rlc, rlc.y_pool))
        pcc_value = pcc_sum.item()
        total = sub(total, scale(pcc_sum, lambda2))
    return LossBundle(
        total=total,
        l_mse=l_mse.item(),
        l_orth=l_orth_value,
        pcc_sum=pcc_value,
        lambda1=lambda1,
        lambda2=lambda2,
    )


def orth_residual(w) -> float:
    """||W^T W - I||_F^2 on plain arrays."""
    w = np.asarray(w.data if isinstance(w, Tensor) else w, dtype=np.float64)
    residual = w.T @ w - np.eye(w.shape[1])
    return float(np.sum(residual * residual))


def retract_orthonormal(w) -> np.ndarray:
    """Nearest matrix with orthonormal columns (polar factor U V^T of the thin SVD)."""
    w = np.asarray(w.data if isinstance(w, Tensor) else w, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] > w.shape[0]:
        raise ShapeError(f"retraction needs a tall matrix, got {w.shape}")
    u, _, vt = np.linalg.svd(w, full_matrices=False)
    return u @ vt


def principal_rotation(w, f_stat) -> np.ndarray:
    """K x K orthogonal R such that the columns of (F W R) are uncorrelated.

    R holds the eigenvectors of cov(F W), permuted and signed so that R stays
    as close to the identity as possible and factor k keeps its pairing with
    pooled statistic k.
    """
    w = np.asarray(w.data if isinstance(w, Tensor) else w, dtype=np.float64)
    f_stat = np.asarray(f_stat, dtype=np.float64)
    if f_stat.ndim != 2 or f_stat.shape[1] != w.shape[0]:
        raise ShapeError(f"F_stat of shape {f_stat.shape} does not match W_rlc rows {w.shape[0]}")
    if f_stat.shape[0] < 2:
        raise ShapeError("factor alignment needs at least 2 windows")
    z = f_stat @ w
    z = z - z.mean(axis=0, keepdims=True)
    _, vectors = np.linalg.eigh(z.T @ z)
    rows, cols = linear_sum_assignment(-np.abs(vectors))
    rotation = np.empty_like(vectors)
    for i, j in zip(rows, cols):
        column = vectors[:, j]
        rotation[:, i] = column if column[i] >= 0 else -column
    return rotation


def spectral_norm(w, max_iter: int = 50, tol: float = 1e-10) -> float:
    """Largest singular value by power iteration on W^T W."""
    w = np.asarray(w.data if isinstance(w, Tensor) else w, dtype=np.float64)
    if w.ndim != 2 or w.size == 0:
        raise ShapeError(f"spectral_norm expects a non-empty matrix, got {w.shape}")
    gram = w.T @ w
    v = np.random.default_rng(0).standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    eig = 0.0
    for _ in range(max_iter):
        u = gram @ v
        norm = np.linalg.norm(u)
        if norm == 0.0:
            return 0.0
        v = u / norm
        new_eig = float(v @ gram @ v)
        if abs(new_eig - eig) <= tol * max(abs(new_eig), 1e-300):
            eig = new_eig
            break
        eig = new_eig
    return float(np.sqrt(max(eig, 0.0)))
