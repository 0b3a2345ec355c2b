"""Differentiable kernels.

Every function here takes `Tensor`s, computes the forward pass with numpy and
registers a backward rule through `Tensor.from_op`. Images use the NCHW
layout; convolution kernels are OIHW for `conv2d` and (in, out, kH, kW) for
`conv2d_transpose`, so that the transpose is the adjoint of `conv2d` for the
same kernel tensor.
"""
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import as_strided

from acvg.errors import GeometryError, ShapeError
from acvg.tensor.tensor import Tensor

Operand = Union[Tensor, float, int]

LEAKY_SLOPE = 0.2


def _as_tensor(value: Operand, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype) if dtype is not None else value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for dim, extent in enumerate(shape):
        if extent == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


# Elementwise arithmetic --------------------------------------------------------


def add(a: Operand, b: Operand) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), backward)


def sub(a: Operand, b: Operand) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), backward)


def mul(a: Operand, b: Operand) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_broadcast(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), backward)


def abs_pow(x: Tensor, p: float = 1.0) -> Tensor:
    """|x| ** p; the gradient at zero is taken as zero."""
    magnitude = np.abs(x.data)
    if p == 1:
        out = magnitude

        def backward(g):
            return (g * np.sign(x.data),)

    elif p == 2:
        out = x.data * x.data

        def backward(g):
            return (2.0 * g * x.data,)

    else:
        out = magnitude**p

        def backward(g):
            return (g * p * magnitude ** (p - 1) * np.sign(x.data),)

    return Tensor.from_op(out, (x,), backward)


def square(x: Tensor) -> Tensor:
    return abs_pow(x, 2)


def log(x: Tensor) -> Tensor:
    def backward(g):
        return (g / x.data,)

    return Tensor.from_op(np.log(x.data), (x,), backward)


def clamp(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.data >= low) & (x.data <= high)

    def backward(g):
        return (g * inside,)

    return Tensor.from_op(np.clip(x.data, low, high), (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.data.dtype)

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor.from_op(out, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return Tensor.from_op(out, (x,), backward)


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    positive = x.data > 0

    def backward(g):
        return (np.where(positive, g, slope * g),)

    return Tensor.from_op(np.where(positive, x.data, slope * x.data), (x,), backward)


# Reductions and shape plumbing --------------------------------------------------


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.data.dtype, copy=True),)

    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims), dtype=x.data.dtype)
    return Tensor.from_op(out, (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor.from_op(x.data.reshape(shape), (x,), backward)


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, type(Ellipsis))) for i in items)


def index(x: Tensor, idx) -> Tensor:
    basic = _is_basic_index(idx)

    def backward(g):
        grad = np.zeros_like(x.data)
        if basic:
            grad[idx] += g
        else:
            np.add.at(grad, idx, g)
        return (grad,)

    return Tensor.from_op(np.array(x.data[idx]), (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    first = tensors[0]
    for other in tensors[1:]:
        if other.ndim != first.ndim or any(
            a != b for d, (a, b) in enumerate(zip(first.shape, other.shape)) if d != axis % first.ndim
        ):
            raise ShapeError(f"concat along axis {axis}: shapes {first.shape} and {other.shape} disagree")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    first = tensors[0]
    for other in tensors[1:]:
        if other.shape != first.shape:
            raise ShapeError(f"stack: shapes {first.shape} and {other.shape} disagree")

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor.from_op(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def tile_planes(a: Tensor, height: int, width: int) -> Tensor:
    """(N, m) -> (N, m, H, W): every component becomes a constant plane."""
    if a.ndim != 2:
        raise ShapeError(f"tile_planes expects an (N, m) tensor, got {a.shape}")
    out = np.ascontiguousarray(
        np.broadcast_to(a.data[:, :, None, None], (a.shape[0], a.shape[1], height, width))
    )

    def backward(g):
        return (g.sum(axis=(2, 3)),)

    return Tensor.from_op(out, (a,), backward)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
    if rate <= 0.0 or rng is None:
        return x
    mask = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)

    def backward(g):
        return (g * mask,)

    return Tensor.from_op(x.data * mask, (x,), backward)


def center(x: Tensor) -> Tensor:
    """Subtract the per-sample feature mean (bias-only normalization)."""

    def backward(g):
        return (g - g.mean(axis=1, keepdims=True),)

    return Tensor.from_op(x.data - x.data.mean(axis=1, keepdims=True), (x,), backward)


# Dense and convolutional layers -------------------------------------------------


def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense: input {x.shape} does not match weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense: bias {bias.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def backward(g):
        grads = [g @ weight.data.T, x.data.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward)


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Strided (N, C, kH, kW, H', W') view over a padded input."""
    xp = np.ascontiguousarray(xp)
    sn, sc, sh, sw = xp.strides
    return as_strided(
        xp,
        shape=(xp.shape[0], xp.shape[1], kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )


def _scatter(cols: np.ndarray, shape: tuple[int, int, int, int], stride: int) -> np.ndarray:
    """Adjoint of `_windows`: cols is (C, kH, kW, N, H', W')."""
    _, kh, kw, _, ho, wo = cols.shape
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        rows = slice(i, i + stride * (ho - 1) + 1, stride)
        for j in range(kw):
            columns = slice(j, j + stride * (wo - 1) + 1, stride)
            out[:, :, rows, columns] += cols[:, i, j].transpose(1, 0, 2, 3)
    return out


def _conv_geometry(extent: int, kernel: int, stride: int, padding: int, axis: str) -> int:
    span = extent + 2 * padding - kernel
    if span < 0 or span % stride != 0:
        raise GeometryError(
            f"conv2d: {axis}={extent} with kernel {kernel}, stride {stride}, padding {padding} "
            "gives a non-integral output extent"
        )
    return span // stride + 1


def conv2d(
    x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0
) -> Tensor:
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} does not match kernel {kernel.shape}")
    if stride < 1 or padding < 0:
        raise GeometryError(f"conv2d: invalid stride {stride} or padding {padding}")
    n, _, h, w = x.shape
    _, _, kh, kw = kernel.shape
    ho = _conv_geometry(h, kh, stride, padding, "H")
    wo = _conv_geometry(w, kw, stride, padding, "W")

    xp = _pad(x.data, padding)
    cols = _windows(xp, kh, kw, stride, ho, wo)
    out = np.tensordot(cols, kernel.data, axes=([1, 2, 3], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        grad_kernel = np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))
        grad_cols = np.tensordot(kernel.data, g, axes=([0], [1]))
        grad_x = _scatter(grad_cols, xp.shape, stride)[:, :, padding : padding + h, padding : padding + w]
        grads = [grad_x, grad_kernel]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor.from_op(out, parents, backward)


def conv2d_transpose(
    x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0
) -> Tensor:
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[0]:
        raise ShapeError(f"conv2d_transpose: input {x.shape} does not match kernel {kernel.shape}")
    if stride < 1 or padding < 0:
        raise GeometryError(f"conv2d_transpose: invalid stride {stride} or padding {padding}")
    n, _, h, w = x.shape
    _, c_out, kh, kw = kernel.shape
    hp, wp = (h - 1) * stride + kh, (w - 1) * stride + kw
    if hp - 2 * padding < 1 or wp - 2 * padding < 1:
        raise GeometryError(
            f"conv2d_transpose: input {x.shape} with kernel {kernel.shape}, stride {stride}, "
            f"padding {padding} gives an empty output"
        )

    cols = np.tensordot(kernel.data, x.data, axes=([0], [1]))
    out = _scatter(cols, (n, c_out, hp, wp), stride)[:, :, padding : hp - padding, padding : wp - padding]
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        g_cols = _windows(_pad(g, padding), kh, kw, stride, h, w)
        grad_x = np.tensordot(g_cols, kernel.data, axes=([1, 2, 3], [1, 2, 3])).transpose(0, 3, 1, 2)
        grad_kernel = np.tensordot(x.data, g_cols, axes=([0, 2, 3], [0, 4, 5]))
        grads = [np.ascontiguousarray(grad_x), grad_kernel]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor.from_op(out, parents, backward)


def max_pool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    """2x2/2 max pooling; ties send the gradient to the first row-major maximum."""
    if window != 2 or stride != 2:
        raise GeometryError(f"max_pool2d supports window 2 / stride 2 only, got {window}/{stride}")
    if x.ndim != 4:
        raise ShapeError(f"max_pool2d expects NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise GeometryError(f"max_pool2d: extents {h}x{w} are not divisible by 2")
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    winners = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, winners, axis=-1)[..., 0]

    def backward(g):
        grad_blocks = np.zeros_like(blocks)
        np.put_along_axis(grad_blocks, winners, g[..., None], axis=-1)
        grad = grad_blocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (grad.reshape(n, c, h, w),)

    return Tensor.from_op(out, (x,), backward)


def upsample_nearest2(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest2 expects NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return Tensor.from_op(out, (x,), backward)


# Recurrent cells ------------------------------------------------------------------


def _gates(z: Tensor, hidden: int, c: Tensor) -> tuple[Tensor, Tensor]:
    i = sigmoid(z[:, 0:hidden])
    f = sigmoid(z[:, hidden : 2 * hidden])
    o = sigmoid(z[:, 2 * hidden : 3 * hidden])
    g = tanh(z[:, 3 * hidden : 4 * hidden])
    c_next = f * c + i * g
    h_next = o * tanh(c_next)
    return h_next, c_next


def conv_lstm_step(x: Tensor, h: Tensor, c: Tensor, weight: Tensor, bias: Tensor) -> tuple[Tensor, Tensor]:
    """One ConvLSTM step. Gates are stacked i, f, o, g along the output channels
    of `weight` (4*hidden, in + hidden, k, k) and use same-padding."""
    if x.ndim != 4 or h.ndim != 4 or x.shape[2:] != h.shape[2:] or h.shape != c.shape:
        raise ShapeError(f"conv_lstm_step: input {x.shape}, hidden {h.shape} and cell {c.shape} disagree")
    hidden = h.shape[1]
    if weight.shape[0] != 4 * hidden or weight.shape[1] != x.shape[1] + hidden:
        raise ShapeError(f"conv_lstm_step: kernel {weight.shape} does not fit input {x.shape} / hidden {h.shape}")
    z = conv2d(concat([x, h], axis=1), weight, bias, stride=1, padding=weight.shape[-1] // 2)
    return _gates(z, hidden, c)


def lstm_step(a: Tensor, h: Tensor, c: Tensor, weight: Tensor, bias: Tensor) -> tuple[Tensor, Tensor]:
    """Dense LSTM cell with the same gate layout as `conv_lstm_step`;
    `weight` is (in + hidden, 4*hidden)."""
    if a.ndim != 2 or h.ndim != 2 or h.shape != c.shape or a.shape[0] != h.shape[0]:
        raise ShapeError(f"lstm_step: input {a.shape}, hidden {h.shape} and cell {c.shape} disagree")
    hidden = h.shape[1]
    if weight.shape != (a.shape[1] + hidden, 4 * hidden):
        raise ShapeError(f"lstm_step: weight {weight.shape} does not fit input {a.shape} / hidden {h.shape}")
    z = dense(concat([a, h], axis=1), weight, bias)
    return _gates(z, hidden, c)
