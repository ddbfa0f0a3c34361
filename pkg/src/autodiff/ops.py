"""
Differentiable operations over Tensor.

Each op computes its forward value with numpy, and when recording registers a
closure that maps the upstream gradient to one gradient per input. Only the
operations the forecaster needs are provided.
"""
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff.tensor import (
    Tensor,
    active_tape,
    as_tensor,
    check_finite,
    debug_enabled,
)
from src.errors import NumericError, ShapeError

ArrayLike = Union[Tensor, np.ndarray, float, int]

STD_EPS = 1e-8
LAYER_NORM_EPS = 1e-5
PADDING_MODES = ("replicate", "zero")


def _result(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn) -> Tensor:
    check_finite(op, data)
    out = Tensor.wrap(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, inputs, out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not broadcastable") from None


def _normalize_axes(axes, ndim: int) -> Tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for {ndim}-d tensor")
        out.append(ax % ndim)
    return tuple(sorted(set(out)))


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result("add", a.data + b.data, (a, b), backward)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result("sub", a.data - b.data, (a, b), backward)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result("mul", a.data * b.data, (a, b), backward)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    if debug_enabled() and np.any(b.data == 0.0):
        raise NumericError("div: exact zero in divisor")

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _result("div", a.data / b.data, (a, b), backward)


def scale(a: ArrayLike, constant: float) -> Tensor:
    a = as_tensor(a)
    c = float(constant)

    def backward(g):
        return (g * c,)

    return _result("scale", a.data * c, (a,), backward)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    """Overflow-free logistic, clipped so that outputs stay strictly inside (0, 1)."""
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(s, np.finfo(np.float64).tiny, 1.0 - np.finfo(np.float64).epsneg)


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    s = sigmoid_forward(a.data)

    def backward(g):
        return (g * s * (1.0 - s),)

    return _result("sigmoid", s, (a,), backward)


def sqrt(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    r = np.sqrt(a.data)
    if debug_enabled() and np.any(r == 0.0):
        raise NumericError("sqrt: zero argument has no finite derivative")

    def backward(g):
        return (g / (2.0 * r),)

    return _result("sqrt", r, (a,), backward)


def clamp_min(a: ArrayLike, floor: float) -> Tensor:
    a = as_tensor(a)
    passed = a.data > floor

    def backward(g):
        return (g * passed,)

    return _result("clamp_min", np.maximum(a.data, floor), (a,), backward)


_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(kind: str, a: ArrayLike, b: Optional[ArrayLike] = None) -> Tensor:
    """Dispatch by op-kind: add, sub, mul, div, sigmoid or scale (``b`` is the constant)."""
    if kind in _BINARY:
        if b is None:
            raise ShapeError(f"{kind} needs two operands")
        return _BINARY[kind](a, b)
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "scale":
        return scale(a, float(b.item() if isinstance(b, Tensor) else b))
    raise ValueError(f"unknown elementwise op '{kind}'")


# ---------------------------------------------------------------------------
# Linear algebra and attention building blocks
# ---------------------------------------------------------------------------

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands with at least 2 dims, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner extents differ, {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch extents {a.shape[:-2]} and {b.shape[:-2]} do not broadcast") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    data = np.matmul(np.ascontiguousarray(a.data), np.ascontiguousarray(b.data))
    return _result("matmul", data, (a, b), backward)


def softmax_forward(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    axis = _normalize_axes(axis, x.ndim)[0]
    s = softmax_forward(x.data, axis)

    def backward(g):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return _result("softmax", s, (x,), backward)


def layer_norm_forward(x: np.ndarray, gain: Optional[np.ndarray], bias: Optional[np.ndarray],
                       eps: float = LAYER_NORM_EPS) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (output, normalized input, inverse std) along the last axis."""
    mu = np.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out, xhat, inv


def layer_norm(x: ArrayLike, gain: Optional[Tensor] = None, bias: Optional[Tensor] = None,
               eps: float = LAYER_NORM_EPS) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 1 or x.shape[-1] < 1:
        raise ShapeError("layer_norm needs a non-empty last axis")
    out, xhat, inv = layer_norm_forward(
        x.data,
        None if gain is None else gain.data,
        None if bias is None else bias.data,
        eps,
    )
    inputs = (x,) + tuple(t for t in (gain, bias) if t is not None)
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        dxhat = g * gain.data if gain is not None else g
        dx = inv * (
            dxhat
            - np.mean(dxhat, axis=-1, keepdims=True)
            - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
        )
        grads = [dx]
        if gain is not None:
            grads.append(np.sum(g * xhat, axis=lead).reshape(gain.shape))
        if bias is not None:
            grads.append(np.sum(g, axis=lead).reshape(bias.shape))
        return grads

    return _result("layer_norm", out, inputs, backward)


# ---------------------------------------------------------------------------
# Temporal windows: convolution and pooling along axis -2 of (..., T, D)
# ---------------------------------------------------------------------------

def window_index(length: int, width: int, stride: int) -> np.ndarray:
    """Source positions (T_out, width) of every window, before edge handling.

    Stride 1 centres each window on its output position and keeps the length.
    Larger strides left-align window i at i*stride and emit floor(T/stride)
    outputs, so windows may run past the right edge.
    """
    if width < 1 or stride < 1:
        raise ShapeError(f"window width and stride must be >= 1, got {width}, {stride}")
    if length < 1:
        raise ShapeError("temporal length must be >= 1")
    if stride == 1:
        starts = np.arange(length) - (width - 1) // 2
    else:
        starts = np.arange(length // stride) * stride
    return starts[:, None] + np.arange(width)[None, :]


def _gather_windows(x: np.ndarray, index: np.ndarray, padding: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if padding not in PADDING_MODES:
        raise ValueError(f"padding must be one of {PADDING_MODES}, got '{padding}'")
    length = x.shape[-2]
    valid = (index >= 0) & (index < length)
    clipped = np.clip(index, 0, length - 1)
    windows = np.take(x, clipped, axis=-2)
    if padding == "zero":
        windows = windows * valid[:, :, None]
    return windows, clipped, valid


def _scatter_windows(dwin: np.ndarray, clipped: np.ndarray, x_shape: Tuple[int, ...]) -> np.ndarray:
    lead = int(np.prod(x_shape[:-2], dtype=np.int64))
    length, depth = x_shape[-2], x_shape[-1]
    dx = np.zeros((lead, length, depth))
    np.add.at(dx, (slice(None), clipped.reshape(-1)), dwin.reshape(lead, -1, depth))
    return dx.reshape(x_shape)


def conv1d(x: ArrayLike, kernel: ArrayLike, stride: int = 1, padding: str = "replicate") -> Tensor:
    """Temporal convolution over axis -2 of ``x`` shaped (..., T, D).

    ``kernel`` of shape (w,) is shared across features (depthwise, used for
    smoothing); shape (w, D, D_out) mixes features like a dense Conv1d.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim < 2:
        raise ShapeError(f"conv1d expects (..., T, D), got {x.shape}")
    width = kernel.shape[0]
    index = window_index(x.shape[-2], width, stride)
    windows, clipped, valid = _gather_windows(x.data, index, padding)

    if kernel.ndim == 1:
        k = kernel.data
        out = k[0] * windows[..., 0, :]
        for j in range(1, width):
            out = out + k[j] * windows[..., j, :]

        def backward(g):
            dwin = np.stack([g * k[j] for j in range(width)], axis=-2)
            if padding == "zero":
                dwin = dwin * valid[:, :, None]
            dk = np.array([np.sum(g * windows[..., j, :]) for j in range(width)])
            return _scatter_windows(dwin, clipped, x.shape), dk

    elif kernel.ndim == 3:
        if kernel.shape[1] != x.shape[-1]:
            raise ShapeError(f"conv1d kernel expects {kernel.shape[1]} input features, got {x.shape[-1]}")
        d_in, d_out = kernel.shape[1], kernel.shape[2]
        flat_k = kernel.data.reshape(width * d_in, d_out)
        flat_w = windows.reshape(windows.shape[:-2] + (width * d_in,))
        out = np.matmul(flat_w, flat_k)

        def backward(g):
            dk = np.matmul(flat_w.reshape(-1, width * d_in).T, g.reshape(-1, d_out))
            dwin = np.matmul(g, flat_k.T).reshape(windows.shape)
            if padding == "zero":
                dwin = dwin * valid[:, :, None]
            return _scatter_windows(dwin, clipped, x.shape), dk.reshape(kernel.shape)

    else:
        raise ShapeError(f"conv1d kernel must be (w,) or (w, D_in, D_out), got {kernel.shape}")

    return _result("conv1d", out, (x, kernel), backward)


def maxpool1d(x: ArrayLike, kernel_size: int = 3, stride: int = 2) -> Tensor:
    """Max over edge-replicated windows along axis -2; ties route to the first maximum."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeError(f"maxpool1d expects (..., T, D), got {x.shape}")
    index = window_index(x.shape[-2], kernel_size, stride)
    windows, clipped, _ = _gather_windows(x.data, index, "replicate")
    arg = np.argmax(windows, axis=-2)
    out = np.take_along_axis(windows, arg[..., None, :], axis=-2)[..., 0, :]

    def backward(g):
        lead = int(np.prod(x.shape[:-2], dtype=np.int64))
        length, depth = x.shape[-2], x.shape[-1]
        t_out = index.shape[0]
        source = clipped[np.arange(t_out)[:, None], arg.reshape(lead, t_out, depth)]
        dx = np.zeros((lead, length, depth))
        np.add.at(
            dx,
            (np.arange(lead)[:, None, None], source, np.arange(depth)[None, None, :]),
            g.reshape(lead, t_out, depth),
        )
        return (dx.reshape(x.shape),)

    return _result("maxpool1d", out, (x,), backward)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def _expand(g: np.ndarray, shape: Tuple[int, ...], axes: Tuple[int, ...], keepdims: bool) -> np.ndarray:
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def reduce(x: ArrayLike, kind: str, axes=None, keepdims: bool = False) -> Tensor:
    """mean, population std or sum over ``axes``.

    The std forward is exact, so a constant slice gives 0; its backward divides
    by sqrt(var + STD_EPS) to stay finite there.
    """
    x = as_tensor(x)
    axes = _normalize_axes(axes, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes], dtype=np.int64))

    if kind == "sum":
        data = np.sum(x.data, axis=axes, keepdims=keepdims)

        def backward(g):
            return (np.array(_expand(g, x.shape, axes, keepdims)),)

    elif kind == "mean":
        data = np.mean(x.data, axis=axes, keepdims=keepdims)

        def backward(g):
            return (_expand(g, x.shape, axes, keepdims) / count,)

    elif kind == "std":
        mu = np.mean(x.data, axis=axes, keepdims=True)
        xc = x.data - mu
        var = np.mean(xc * xc, axis=axes, keepdims=True)
        s = np.sqrt(var)
        data = s if keepdims else np.squeeze(s, axis=axes)
        guarded = np.sqrt(var + STD_EPS)

        def backward(g):
            return (_expand(g, x.shape, axes, keepdims) * xc / (count * guarded),)

    else:
        raise ValueError(f"unknown reduction '{kind}'")

    return _result(f"reduce_{kind}", np.asarray(data, dtype=np.float64), (x,), backward)


def sum_(x: ArrayLike, axes=None, keepdims: bool = False) -> Tensor:
    return reduce(x, "sum", axes, keepdims)


def mean(x: ArrayLike, axes=None, keepdims: bool = False) -> Tensor:
    return reduce(x, "mean", axes, keepdims)


def std(x: ArrayLike, axes=None, keepdims: bool = False) -> Tensor:
    return reduce(x, "std", axes, keepdims)


# ---------------------------------------------------------------------------
# Indexing and layout
# ---------------------------------------------------------------------------

def embedding_lookup(table: Tensor, indices: np.ndarray, feature: str = "feature") -> Tensor:
    """Gather rows of ``table`` (V, D_emb); gradients scatter-add back into the table."""
    indices = np.asarray(indices)
    if not np.issubdtype(indices.dtype, np.integer):
        raise TypeError(f"{feature}: embedding indices must be integers, got {indices.dtype}")
    rows = table.shape[0]
    bad = (indices < 0) | (indices >= rows)
    if np.any(bad):
        position = tuple(int(i) for i in np.argwhere(bad)[0])
        raise IndexError(
            f"{feature}: code {int(indices[position])} at position {position} "
            f"is outside table rows [0, {rows})"
        )

    def backward(g):
        dtable = np.zeros(table.shape)
        np.add.at(dtable, indices.reshape(-1), g.reshape(-1, table.shape[1]))
        return (dtable,)

    return _result("embedding_lookup", table.data[indices], (table,), backward)


def take(x: ArrayLike, index: np.ndarray, axis: int) -> Tensor:
    """np.take along ``axis`` with scatter-add backward; index dims replace that axis."""
    x = as_tensor(x)
    index = np.asarray(index)
    axis = _normalize_axes(axis, x.ndim)[0]

    def backward(g):
        dx = np.zeros(x.shape)
        target = np.moveaxis(dx, axis, 0)
        moved = np.moveaxis(g, tuple(range(axis, axis + index.ndim)), tuple(range(index.ndim)))
        np.add.at(target, index.reshape(-1), moved.reshape((-1,) + target.shape[1:]))
        return (dx,)

    return _result("take", np.take(x.data, index, axis=axis), (x,), backward)


def reshape(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} to {tuple(shape)}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return _result("reshape", data, (x,), backward)


def transpose(x: ArrayLike, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _result("transpose", np.transpose(x.data, axes), (x,), backward)


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    ndim = tensors[0].ndim
    axis = _normalize_axes(axis, ndim)[0]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result("concat", data, tensors, backward)
