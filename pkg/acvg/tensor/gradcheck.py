from typing import Callable, Sequence

import numpy as np

from acvg.errors import NumericError
from acvg.tensor.tensor import Tensor, backward, no_grad, precision


def grad_check(
    fn: Callable[..., Tensor],
    input_shapes: Sequence[tuple[int, ...]],
    seed: int = 0,
    eps: float = 1e-5,
    floor: float = 1e-8,
) -> float:
    """Compare analytic gradients of `fn` against central differences.

    Inputs are drawn from a standard normal (so pooling ties have probability
    zero) in float64 mode.

    Returns max |a - n| / max(|a|, |n|, floor) over all probed entries.
    """
    with precision(np.float64):
        rng = np.random.default_rng(seed)
        inputs = [Tensor(rng.standard_normal(shape), requires_grad=True) for shape in input_shapes]
        leaves = list(inputs)

        loss = fn(*inputs)
        if not np.all(np.isfinite(loss.data)):
            raise NumericError(f"grad_check: forward pass produced {loss.data}")
        backward(loss)
        analytic = [
            leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves
        ]

        worst = 0.0
        with no_grad():
            for leaf, grad in zip(leaves, analytic):
                if not np.all(np.isfinite(grad)):
                    raise NumericError(f"grad_check: backward pass produced non-finite gradients for {leaf!r}")
                flat = leaf.data.reshape(-1)
                for i in range(flat.size):
                    original = flat[i]
                    flat[i] = original + eps
                    plus = fn(*inputs).item()
                    flat[i] = original - eps
                    minus = fn(*inputs).item()
                    flat[i] = original
                    if not (np.isfinite(plus) and np.isfinite(minus)):
                        raise NumericError("grad_check: perturbed forward pass is not finite")
                    numeric = (plus - minus) / (2.0 * eps)
                    a = float(grad.reshape(-1)[i])
                    error = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                    worst = max(worst, error)
        return worst


def directional_check(
    fn: Callable[[], Tensor],
    groups: Sequence[Sequence[Tensor]],
    seed: int = 0,
    eps: float = 1e-8,
    directions: int = 2,
) -> float:
    """Compare analytic directional derivatives of `fn` against finite differences.

    For every group of float64 leaves, `directions` standard-normal directions
    restricted to that group are drawn. Whole networks have many ReLU kinks
    and pooling windows, so a step may straddle one of them on a single side;
    the closest of the central, forward and backward differences is kept.
    Errors are scaled by the group's analytic gradient norm, which is the
    standard deviation of the directional derivative.

    Returns the largest scaled error over all groups and directions.
    """
    with precision(np.float64):
        rng = np.random.default_rng(seed)
        leaves = [leaf for group in groups for leaf in group]
        for leaf in leaves:
            leaf.grad = None
        loss = fn()
        if not np.all(np.isfinite(loss.data)):
            raise NumericError(f"directional_check: forward pass produced {loss.data}")
        backward(loss)
        analytic = {
            id(leaf): leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves
        }
        for leaf in leaves:
            leaf.grad = None

        worst = 0.0
        with no_grad():
            base = fn().item()
            for group in groups:
                grads = [analytic[id(leaf)] for leaf in group]
                if not all(np.all(np.isfinite(g)) for g in grads):
                    raise NumericError("directional_check: backward pass produced non-finite gradients")
                scale = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
                originals = [leaf.data.copy() for leaf in group]
                for _ in range(directions):
                    steps = [rng.standard_normal(leaf.shape) for leaf in group]
                    expected = sum(float(np.sum(g * d)) for g, d in zip(grads, steps))
                    values = []
                    for sign in (1.0, -1.0):
                        for leaf, original, d in zip(group, originals, steps):
                            leaf.data[...] = original + sign * eps * d
                        values.append(fn().item())
                    for leaf, original in zip(group, originals):
                        leaf.data[...] = original
                    plus, minus = values
                    if not (np.isfinite(plus) and np.isfinite(minus)):
                        raise NumericError("directional_check: perturbed forward pass is not finite")
                    estimates = ((plus - minus) / (2.0 * eps), (plus - base) / eps, (base - minus) / eps)
                    gap = min(abs(numeric - expected) for numeric in estimates)
                    denominator = max(abs(expected), scale)
                    if denominator == 0.0:
                        error = 0.0 if gap == 0.0 else float("inf")
                    else:
                        error = gap / denominator
                    worst = max(worst, error)
        return worst
