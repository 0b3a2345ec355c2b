import math

import numpy as np
from loguru import logger

from acvg.errors import IncompleteGradientError
from acvg.tensor.params import ParamStore


def adam_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update over every parameter in name order.

    Gradients are cleared afterwards. All gradients must be present before any
    parameter moves.
    """
    for name, param in store.items():
        if param.grad is None:
            raise IncompleteGradientError(f"Parameter {name!r} has no gradient; was it part of the loss?")

    for name, param in store.items():
        grad = param.grad
        m = store.first_moment[name]
        v = store.second_moment[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        store.steps[name] += 1
        step = store.steps[name]
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        param.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.data.dtype)
        param.grad = None


class Adam:
    def __init__(
        self,
        store: ParamStore,
        lr: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.store = store
        self.lr = lr
        self.betas = betas
        self.eps = eps

    def zero_grad(self) -> None:
        self.store.zero_grad()

    def step(self) -> None:
        adam_step(self.store, self.lr, self.betas[0], self.betas[1], self.eps)


def clip_grad_norm(store: ParamStore, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most `max_norm`.

    Returns the norm before clipping.
    """
    total = 0.0
    for _, param in store.items():
        if param.grad is not None:
            total += float(np.sum(param.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for _, param in store.items():
            if param.grad is not None:
                param.grad *= param.grad.dtype.type(scale)
        logger.debug(f"Clipped gradient norm {norm:.4f} to {max_norm}.")
    return norm
