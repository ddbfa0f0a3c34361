"""Adam with bias correction and global-norm clipping."""
import logging
from typing import Dict, List, Optional

import numpy as np

from src.autodiff.module import Parameter
from src.errors import DivergenceError

logger = logging.getLogger(__name__)


class Adam:
    def __init__(self, named_params: Dict[str, Parameter], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8, clip_norm: float = 0.0):
        self.params = dict(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.clip_norm = clip_norm
        # first / second moment estimates, shaped like the parameters
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def grads(self) -> Dict[str, np.ndarray]:
        out = {}
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                logger.error("non-finite gradient in %s", k)
                raise DivergenceError(f"non-finite gradient in parameter '{k}'")
            out[k] = g
        return out

    def clip(self, grads: Dict[str, np.ndarray]) -> float:
        """Scale ``grads`` in place to the global-norm cap; returns the pre-clip norm."""
        norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
        if self.clip_norm > 0 and norm > self.clip_norm:
            factor = self.clip_norm / norm
            for k in grads:
                grads[k] = grads[k] * factor
        return norm

    def step(self, grads: Optional[Dict[str, np.ndarray]] = None) -> float:
        """Apply one update from ``grads`` (default: the parameters' .grad)."""
        if grads is None:
            grads = self.grads()
        else:
            grads = {k: np.asarray(grads.get(k, np.zeros_like(p.data)), dtype=np.float64)
                     for k, p in self.params.items()}
            for k, g in grads.items():
                if not np.all(np.isfinite(g)):
                    logger.error("non-finite gradient in %s", k)
                    raise DivergenceError(f"non-finite gradient in parameter '{k}'")
        norm = self.clip(grads)

        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / bc1
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(self.v[k] * (1.0 / bc2)) + self.epsilon
            p.data = p.data - step_size * self.m[k] / denom
        return norm

    def state_dict(self) -> Dict[str, object]:
        return {"t": self.t, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}


def adam_step(params: Dict[str, Parameter], grads: Dict[str, np.ndarray], state: Adam, lr: Optional[float] = None) -> Adam:
    """Functional form: update ``params`` in place through ``state``."""
    if lr is not None:
        state.lr = lr
    missing: List[str] = [k for k in params if k not in state.params]
    if missing:
        raise KeyError(f"parameters not tracked by the optimizer: {missing}")
    state.step(grads)
    return state
