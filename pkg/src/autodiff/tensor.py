"""
Dense fp64 tensor and the tape that records operations for reverse-mode
differentiation.

Operations only record while a Tape is active (``with Tape() as tape:``) and
at least one input requires a gradient; outside a tape every op is a plain
numpy evaluation, which is what inference and finite differences use.
"""
import logging
import os
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import NumericError, ShapeError

logger = logging.getLogger(__name__)

_DEBUG = os.getenv("PESD_DEBUG", "0") == "1"
_ACTIVE_TAPES: List["Tape"] = []

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def set_debug(enabled: bool) -> None:
    """Toggle finite-value and zero-divisor checks after every forward op."""
    global _DEBUG
    _DEBUG = bool(enabled)


def debug_enabled() -> bool:
    return _DEBUG


def active_tape() -> Optional["Tape"]:
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


class Tensor:
    """N-dimensional float64 array with an optional gradient slot."""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._node: Optional["Node"] = None

    @classmethod
    def wrap(cls, data: np.ndarray) -> "Tensor":
        """Build a constant tensor around ``data`` without copying it."""
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.grad = None
        out.requires_grad = False
        out.name = None
        out._node = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self._node is None:
            raise ShapeError("backward() needs a tensor produced by a recorded operation")
        self._node.tape.backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; the differentiable definitions live in ops.py
    def __add__(self, other):
        from src.autodiff.ops import add
        return add(self, other)

    def __radd__(self, other):
        from src.autodiff.ops import add
        return add(other, self)

    def __sub__(self, other):
        from src.autodiff.ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from src.autodiff.ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from src.autodiff.ops import mul
        return mul(self, other)

    def __rmul__(self, other):
        from src.autodiff.ops import mul
        return mul(other, self)

    def __truediv__(self, other):
        from src.autodiff.ops import div
        return div(self, other)

    def __rtruediv__(self, other):
        from src.autodiff.ops import div
        return div(other, self)

    def __neg__(self):
        from src.autodiff.ops import scale
        return scale(self, -1.0)

    def __matmul__(self, other):
        from src.autodiff.ops import matmul
        return matmul(self, other)

    def reshape(self, *shape):
        from src.autodiff.ops import reshape
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        from src.autodiff.ops import transpose
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Node:
    """One recorded operation: its inputs, its output and how to pull gradients back."""

    __slots__ = ("op", "inputs", "output", "backward_fn", "tape")

    def __init__(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor,
                 backward_fn: BackwardFn, tape: "Tape"):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.tape = tape


class Tape:
    """Ordered record of operations; nodes are appended in execution order."""

    def __init__(self):
        self.nodes: List[Node] = []
        self._leaves: Dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn) -> None:
        node = Node(op, inputs, output, backward_fn, self)
        output._node = node
        self.nodes.append(node)
        for t in inputs:
            if t.requires_grad and t._node is None:
                self._leaves[id(t)] = t

    def backward(self, loss: Tensor) -> None:
        """Accumulate dLoss/dLeaf into ``.grad`` of every leaf that requires it."""
        if loss.size != 1:
            raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
        if not self.nodes:
            raise ShapeError("backward called on an empty tape")

        pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            upstream = pending.pop(id(node.output), None)
            if upstream is None:
                continue
            input_grads = node.backward_fn(upstream)
            for tensor, g in zip(node.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                if g.shape != tensor.shape:
                    raise ShapeError(
                        f"{node.op}: gradient shape {g.shape} does not match input {tensor.shape}"
                    )
                if tensor._node is None:
                    if tensor.grad is None:
                        tensor.grad = np.array(g, dtype=np.float64, copy=True)
                    else:
                        tensor.grad = tensor.grad + g
                else:
                    key = id(tensor)
                    pending[key] = g if key not in pending else pending[key] + g

    def reset(self) -> None:
        """Clear leaf gradients so the next backward starts from zero."""
        for leaf in self._leaves.values():
            leaf.grad = None


def backward(loss: Tensor) -> None:
    """Run reverse accumulation from a scalar loss over the tape that produced it."""
    if loss.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    loss.backward()


def check_finite(op: str, data: np.ndarray) -> None:
    if _DEBUG and not np.all(np.isfinite(data)):
        logger.error("non-finite output from %s", op)
        raise NumericError(f"{op} produced NaN or Inf")
