from typing import Callable

import numpy as np

from src.autodiff.tensor import Tensor, Tape
from src.errors import ConfigError, ShapeError

NORMS = ("elementwise", "normwise")


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5, norm: str = "elementwise") -> float:
    """Compare the taped gradient of ``f`` at ``x`` with central differences.

    Args:
        f: scalar-valued function of one tensor; may close over other tensors.
        x: point of evaluation. Its data is perturbed in place and restored.
        eps: finite-difference step.
        norm: ``"elementwise"`` returns
            max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|);
            ``"normwise"`` returns ||analytic - numeric|| / max(1e-12, ||analytic|| + ||numeric||),
            which tiny gradient components cannot dominate.
    """
    if norm not in NORMS:
        raise ConfigError(f"norm must be one of {NORMS}, got '{norm}'")
    was_required = x.requires_grad
    x.data = np.ascontiguousarray(x.data)
    x.requires_grad = True
    x.grad = None
    try:
        with Tape() as tape:
            loss = f(x)
            if loss.size != 1:
                raise ShapeError(f"grad_check needs a scalar function, got shape {loss.shape}")
            if loss.requires_grad:
                tape.backward(loss)
        analytic = x.grad if x.grad is not None else np.zeros(x.shape)

        numeric = np.zeros(x.shape)
        flat = x.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = f(x).item()
            flat[i] = saved - eps
            down = f(x).item()
            flat[i] = saved
            num_flat[i] = (up - down) / (2.0 * eps)
    finally:
        x.requires_grad = was_required
        x.grad = None

    if norm == "normwise":
        scale = max(1e-12, float(np.linalg.norm(analytic) + np.linalg.norm(numeric)))
        return float(np.linalg.norm(analytic - numeric)) / scale
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
