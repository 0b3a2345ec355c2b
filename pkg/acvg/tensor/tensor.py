import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

from acvg.errors import GraphReuseError, NoGraphError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


def default_dtype() -> np.dtype:
    return getattr(_state, "dtype", np.float32)


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily change the dtype new tensors are created with.

    Training and inference run in float32; `grad_check` switches to float64.
    """
    previous = default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


@contextmanager
def no_grad() -> Iterator[None]:
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """A dense array with an optional gradient and the op that produced it.

    Leaves are created directly; every other tensor comes out of `from_op`,
    which records the parents and the backward rule on a per-forward tape.
    """

    def __init__(
        self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None
    ):
        array = np.asarray(data)
        if not (
            np.issubdtype(array.dtype, np.floating) and array.dtype == default_dtype()
        ):
            array = array.astype(default_dtype())
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._released = False

    @classmethod
    def from_op(
        cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn
    ) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out._released = False
        out.requires_grad = grad_enabled() and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out.name = None
        out._parents = ()
        out._backward = None
        out._released = False
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Arithmetic is defined in functional.py to keep every kernel in one place.
    def __add__(self, other):
        from acvg.tensor import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from acvg.tensor import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from acvg.tensor import functional as F

        return F.sub(other, self)

    def __mul__(self, other):
        from acvg.tensor import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: float):
        from acvg.tensor import functional as F

        return F.mul(self, 1.0 / other)

    def __neg__(self):
        from acvg.tensor import functional as F

        return F.mul(self, -1.0)

    def __getitem__(self, index):
        from acvg.tensor import functional as F

        return F.index(self, index)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Reverse-mode accumulation from a scalar loss into every leaf's `grad`.

    Intermediate gradients and the recorded graph are dropped afterwards, so a
    second call on the same loss raises `GraphReuseError`.
    """
    if loss._released:
        raise GraphReuseError("backward() already ran on this graph; rebuild the forward pass")
    if not loss.requires_grad:
        raise NoGraphError("loss is detached: no recorded graph leads to it")
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")

    order = _topological_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        parent_grads = node._backward(node.grad)
        for parent, grad in zip(node._parents, parent_grads):
            if grad is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(grad, dtype=parent.data.dtype, copy=True)
            else:
                parent.grad += grad
        # Release the tape as we go: intermediates keep neither grad nor graph.
        node.grad = None
        node._parents = ()
        node._backward = None
        node._released = True
    loss._released = True
