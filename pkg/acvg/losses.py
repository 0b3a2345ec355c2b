"""Training objectives.

Reconstruction losses sum over time, channels and pixels and average over
the batch. Inputs are (N, T, C, H, W) for frames and flows and (N, T, m) for
actions; targets may be plain arrays.
"""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from acvg.errors import ShapeError
from acvg.models.discriminator import Discriminator
from acvg.tensor import Tensor
from acvg.tensor import functional as F
from acvg.utils.config import LossWeights

PROB_EPS = 1e-7

Target = Union[Tensor, np.ndarray]


def _as_target(target: Target, like: Tensor) -> Tensor:
    target = target if isinstance(target, Tensor) else Tensor(target)
    if target.shape != like.shape:
        raise ShapeError(f"target {target.shape} and prediction {like.shape} disagree")
    return target


def _neighbor_diff(x: Tensor, axis: int) -> Tensor:
    lead = (slice(None),) * (axis % x.ndim)
    return x[lead + (slice(1, None),)] - x[lead + (slice(None, -1),)]


def _reconstruction(target: Target, prediction: Tensor, lambda1: float, lambda2: float) -> Tensor:
    if prediction.ndim != 5:
        raise ShapeError(f"expected (N, T, C, H, W) predictions, got {prediction.shape}")
    target = _as_target(target, prediction)
    total = F.sum(F.abs_pow(prediction - target, lambda1))
    for axis in (3, 4):
        gap = F.abs_pow(_neighbor_diff(target, axis), 1.0) - F.abs_pow(_neighbor_diff(prediction, axis), 1.0)
        total = total + F.sum(F.abs_pow(gap, lambda2))
    return total * (1.0 / prediction.shape[0])


def recon_image_loss(target: Target, prediction: Tensor, lambda1: float = 1.0, lambda2: float = 1.0) -> Tensor:
    """Per-pixel |x - x~|^lambda1 plus the gradient-difference penalty
    ||dx| - |dx~||^lambda2 along both spatial axes."""
    return _reconstruction(target, prediction, lambda1, lambda2)


def recon_flow_loss(target: Target, prediction: Tensor, lambda1: float = 1.0, lambda2: float = 1.0) -> Tensor:
    return _reconstruction(target, prediction, lambda1, lambda2)


def action_loss(target: Target, prediction: Tensor) -> Tensor:
    if prediction.ndim != 3:
        raise ShapeError(f"expected (N, T, m) actions, got {prediction.shape}")
    target = _as_target(target, prediction)
    return F.sum(F.square(target - prediction)) * (1.0 / prediction.shape[0])


def _clamped(probability: Tensor) -> Tensor:
    return F.clamp(probability, PROB_EPS, 1.0 - PROB_EPS)


def adversarial_gen_loss(d_fake: Tensor) -> Tensor:
    return F.mean(-F.log(_clamped(d_fake)))


def discriminator_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    if d_real.shape != d_fake.shape:
        raise ShapeError(f"real scores {d_real.shape} and fake scores {d_fake.shape} disagree")
    return F.mean(-F.log(_clamped(d_real)) - F.log(1.0 - _clamped(d_fake)))


def discriminate(discriminator: Discriminator, past_frames, future_frames) -> Tensor:
    return discriminator(past_frames, future_frames)


@dataclass
class LossParts:
    recon_image: Optional[Tensor] = None
    recon_flow: Optional[Tensor] = None
    adversarial: Optional[Tensor] = None
    action: Optional[Tensor] = None

    def value(self, name: str) -> Optional[float]:
        part = getattr(self, name)
        return None if part is None else part.item()


def total_loss(parts: LossParts, weights: LossWeights) -> Tensor:
    """beta * (image + flow + mu * adversarial) + gamma * action; absent parts count as zero."""
    total: Union[Tensor, float] = 0.0
    if weights.beta:
        for part, scale in ((parts.recon_image, 1.0), (parts.recon_flow, 1.0), (parts.adversarial, weights.mu)):
            if part is not None:
                total = total + part * (scale * weights.beta)
    if weights.gamma and parts.action is not None:
        total = total + parts.action * float(weights.gamma)
    return total if isinstance(total, Tensor) else Tensor(total)
