"""Finite-difference checks for every differentiable kernel, loss and the
coupled generator/actor rollout. Each entry maps a seed to the maximum
relative error reported by `grad_check` or, for whole networks,
`directional_check`."""
from typing import Callable, Sequence

import numpy as np
from loguru import logger

from acvg.errors import ConfigError
from acvg.losses import (
    action_loss,
    adversarial_gen_loss,
    discriminate,
    discriminator_loss,
    recon_flow_loss,
    recon_image_loss,
)
from acvg.models.actor import Actor
from acvg.models.discriminator import Discriminator
from acvg.models.generator import Generator
from acvg.models.providers import ActorActions
from acvg.tensor import ParamStore, Tensor, directional_check, grad_check, precision
from acvg.tensor import functional as F
from acvg.utils.config import ModelConfig
from acvg.utils.utils import rng_for, timer

GRAD_TOLERANCE = 1e-4
STEPS = 3

# Whole networks are checked along random directions per parameter group.
NETWORK_EPS = 1e-8
NETWORK_DIRECTIONS = 2
BIAS_OFFSET = 0.1

TINY_MODEL = ModelConfig(
    height=32,
    width=32,
    channels=1,
    action_dim=2,
    past_frames=2,
    future_frames=STEPS,
    encoder_channels=(2, 2, 2),
    lstm_channels=2,
    actor_hidden=2,
    actor_channels=(2, 2),
    actor_dense=4,
    disc_channels=(2, 2, 2, 2),
)


class Projection:
    """Random fixed weights per output shape; the checked scalar is <w, y>."""

    def __init__(self, seed: int):
        self.rng = rng_for(seed, 1)
        self.weights: dict[tuple[int, ...], np.ndarray] = {}

    def __call__(self, y: Tensor) -> Tensor:
        if y.shape not in self.weights:
            self.weights[y.shape] = self.rng.standard_normal(y.shape)
        return F.sum(y * Tensor(self.weights[y.shape]))


def _kernel(op: Callable[..., Tensor], *shapes: tuple[int, ...]) -> Callable[[int], float]:
    def check(seed: int) -> float:
        project = Projection(seed)
        return grad_check(lambda *xs: project(op(*xs)), shapes, seed=seed)

    return check


def _conv_lstm(seed: int) -> float:
    project = Projection(seed)

    def run(x, c0, weight, bias):
        h = Tensor(np.zeros(c0.shape))
        c = c0
        for t in range(STEPS):
            h, c = F.conv_lstm_step(x[t], h, c, weight, bias)
        return project(h) + project(c)

    return grad_check(run, [(STEPS, 2, 3, 5, 5), (2, 2, 5, 5), (8, 5, 3, 3), (8,)], seed=seed)


def _lstm(seed: int) -> float:
    project = Projection(seed)

    def run(a, c0, weight, bias):
        h = Tensor(np.zeros(c0.shape))
        c = c0
        for t in range(STEPS):
            h, c = F.lstm_step(a[t], h, c, weight, bias)
        return project(h) + project(c)

    return grad_check(run, [(STEPS, 4, 2), (4, 3), (5, 12), (12,)], seed=seed)


def _reconstruction(loss: Callable[..., Tensor]) -> Callable[[int], float]:
    def check(seed: int) -> float:
        def run(target, prediction):
            return loss(target, prediction, 1.0, 1.0) + loss(target, prediction, 2.0, 2.0)

        return grad_check(run, [(2, 3, 1, 5, 5)] * 2, seed=seed)

    return check


def _offset_biases(store: ParamStore, rng: np.random.Generator) -> None:
    """Zero biases put whole feature maps on a ReLU kink; push them off it."""
    for name, param in store.items():
        if name.endswith(".bias"):
            param.data += rng.normal(0.0, BIAS_OFFSET, size=param.shape)


def _discriminate(seed: int) -> float:
    rng = rng_for(seed, 3)
    with precision(np.float64):
        disc = Discriminator(TINY_MODEL, rng_for(seed, 2))
        _offset_biases(disc.params, rng)
        past = Tensor(rng.uniform(0.0, 1.0, size=(1, TINY_MODEL.past_frames, 1, 32, 32)), requires_grad=True)
        future = Tensor(rng.uniform(0.0, 1.0, size=(1, TINY_MODEL.future_frames, 1, 32, 32)), requires_grad=True)
    project = Projection(seed)
    return directional_check(
        lambda: project(discriminate(disc, past, future)),
        [[past, future], disc.params.values()],
        seed=seed,
        eps=NETWORK_EPS,
        directions=NETWORK_DIRECTIONS,
    )


def _coupled_rollout(seed: int) -> float:
    """Three free-running steps of the generator driven by the delayed actor."""
    cfg = TINY_MODEL
    rng = rng_for(seed, 3)
    with precision(np.float64):
        generator = Generator(cfg, rng_for(seed, 0))
        actor = Actor(cfg, rng_for(seed, 1))
        _offset_biases(generator.params, rng)
        _offset_biases(actor.params, rng)
    shape = (1, cfg.past_frames, cfg.channels, cfg.height, cfg.width)
    past_frames = rng.uniform(0.0, 1.0, size=shape)
    past_flows = rng.normal(0.0, 0.1, size=shape)
    past_actions = rng.uniform(-1.0, 1.0, size=(1, cfg.past_frames, cfg.action_dim))
    project = Projection(seed)

    def run():
        state = generator.warmup(past_frames, past_flows, past_actions)
        provider = ActorActions(actor, past_actions)
        rollout = generator.rollout(state, provider, STEPS)
        return project(rollout.stacked_frames()) + project(F.stack(provider.predictions, axis=1))

    return directional_check(
        run,
        [generator.params.values(), actor.params.values()],
        seed=seed,
        eps=NETWORK_EPS,
        directions=NETWORK_DIRECTIONS,
    )


GRAD_CHECKS: dict[str, Callable[[int], float]] = {
    "conv2d": _kernel(lambda x, k, b: F.conv2d(x, k, b, stride=2, padding=1), (2, 3, 7, 7), (4, 3, 3, 3), (4,)),
    "conv2d_transpose": _kernel(
        lambda x, k, b: F.conv2d_transpose(x, k, b, stride=2, padding=1), (2, 3, 4, 4), (3, 2, 4, 4), (2,)
    ),
    "max_pool2d": _kernel(F.max_pool2d, (2, 3, 6, 6)),
    "upsample": _kernel(F.upsample_nearest2, (2, 3, 3, 3)),
    "dense": _kernel(F.dense, (4, 5), (5, 3), (3,)),
    "sigmoid": _kernel(F.sigmoid, (4, 6)),
    "tanh": _kernel(F.tanh, (4, 6)),
    "leaky_relu": _kernel(F.leaky_relu, (4, 6)),
    "conv_lstm_step": _conv_lstm,
    "lstm_step": _lstm,
    "recon_image": _reconstruction(recon_image_loss),
    "recon_flow": _reconstruction(recon_flow_loss),
    "action": lambda seed: grad_check(action_loss, [(2, 4, 2), (2, 4, 2)], seed=seed),
    "adversarial": lambda seed: grad_check(lambda z: adversarial_gen_loss(F.sigmoid(z)), [(4, 1)], seed=seed),
    "discriminator_loss": lambda seed: grad_check(
        lambda zr, zf: discriminator_loss(F.sigmoid(zr), F.sigmoid(zf)), [(4, 1), (4, 1)], seed=seed
    ),
    "discriminate": _discriminate,
    "coupled_rollout": _coupled_rollout,
}


def resolve_checks(ops: str) -> list[str]:
    """`all` or a comma-separated list of registered names."""
    if ops == "all":
        return list(GRAD_CHECKS)
    names = [name.strip() for name in ops.split(",") if name.strip()]
    unknown = [name for name in names if name not in GRAD_CHECKS]
    if unknown or not names:
        raise ConfigError(f"unknown gradient check(s) {unknown}; choose from {list(GRAD_CHECKS)}")
    return names


@timer(logger)
def run_grad_checks(names: Sequence[str], seed: int = 0) -> dict[str, float]:
    errors = {}
    for name in names:
        errors[name] = GRAD_CHECKS[name](seed)
        status = "ok" if errors[name] < GRAD_TOLERANCE else "FAILED"
        logger.info(f"grad-check {name}: max relative error {errors[name]:.3e} [{status}]")
    return errors


def failed_checks(errors: dict[str, float]) -> list[str]:
    return [name for name, error in errors.items() if not error < GRAD_TOLERANCE]
