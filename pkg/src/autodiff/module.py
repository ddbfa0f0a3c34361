"""
Parameter container and initializers.

Modules discover their parameters by walking instance attributes in
definition order, including lists of parameters or sub-modules, so names are
stable and double as checkpoint keys.
"""
import zlib
from typing import Dict, Iterator, List, Tuple

import numpy as np

from src.autodiff.tensor import Tensor
from src.errors import ShapeError


class Parameter(Tensor):
    """Trainable leaf tensor."""

    def __init__(self, data, name=None):
        super().__init__(data, requires_grad=True, name=name)


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        yield f"{name}.{i}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{name}.{i}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ShapeError(f"state dict mismatch: missing={missing} unexpected={unexpected}")
        for name, param in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ShapeError(f"{name}: stored shape {value.shape} != parameter shape {param.shape}")
            param.data = value.copy()
            param.grad = None


def module_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per (seed, parameter name); adding or removing a
    module never shifts the initial values of the others."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def uniform_init(seed: int, name: str, shape: Tuple[int, ...], fan_in: int) -> Parameter:
    bound = 1.0 / np.sqrt(max(1, fan_in))
    return Parameter(module_rng(seed, name).uniform(-bound, bound, size=shape), name=name)


def normal_init(seed: int, name: str, shape: Tuple[int, ...], std: float = 0.02) -> Parameter:
    return Parameter(module_rng(seed, name).normal(0.0, std, size=shape), name=name)


def orthonormal_init(seed: int, name: str, rows: int, cols: int) -> Parameter:
    """Random matrix with orthonormal columns (QR of a Gaussian draw, sign-fixed)."""
    if cols > rows:
        raise ShapeError(f"cannot build {cols} orthonormal columns in dimension {rows}")
    draw = module_rng(seed, name).standard_normal((rows, cols))
    q, r = np.linalg.qr(draw)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return Parameter(q * signs, name=name)


def constant_init(name: str, shape: Tuple[int, ...], value: float) -> Parameter:
    return Parameter(np.full(shape, float(value)), name=name)
