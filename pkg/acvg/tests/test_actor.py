from dataclasses import replace

import numpy as np
import pytest

from acvg.errors import ProviderError, ShapeError, StreamError
from acvg.models.actor import Actor
from acvg.models.generator import Generator
from acvg.models.providers import ActorActions, GroundTruthActions
from acvg.tensor import Tensor, no_grad
from acvg.utils.config import ModelConfig
from acvg.utils.utils import rng_for


@pytest.fixture
def cfg() -> ModelConfig:
    return ModelConfig(
        channels=1,
        past_frames=3,
        future_frames=4,
        encoder_channels=(2, 2, 3),
        lstm_channels=2,
        actor_channels=(2, 2),
        actor_dense=4,
        actor_dropout=0.5,
        disc_channels=(2, 2, 2, 2),
    )


@pytest.fixture
def chi_stream() -> list[Tensor]:
    rng = np.random.default_rng(0)
    return [Tensor(rng.standard_normal((2, 3, 4, 4))) for _ in range(4)]


@pytest.fixture
def past_actions() -> np.ndarray:
    return np.random.default_rng(1).uniform(-1, 1, (2, 3, 2))


def test_rollout_predicts_bounded_actions(cfg: ModelConfig, chi_stream, past_actions) -> None:
    actor = Actor(cfg, rng_for(0, 1))
    with no_grad():
        predictions = actor.rollout(past_actions, chi_stream, 4)
    assert len(predictions) == 4
    assert all(p.shape == (2, 2) for p in predictions)
    assert all(np.all(np.abs(p.data) < 1.0) for p in predictions)


def test_short_stream_is_rejected(cfg: ModelConfig, chi_stream, past_actions) -> None:
    with pytest.raises(StreamError):
        Actor(cfg, rng_for(0, 1)).rollout(past_actions, chi_stream[:2], 4)


def test_rec_step_checks_action_width(cfg: ModelConfig) -> None:
    actor = Actor(cfg, rng_for(0, 1))
    with pytest.raises(ShapeError):
        actor.rec_step(np.zeros((2, 3)), actor.init_state(2))


def test_delayed_provider_matches_open_loop_rollout(cfg: ModelConfig, chi_stream, past_actions) -> None:
    actor = Actor(cfg, rng_for(0, 1))
    with no_grad():
        expected = actor.rollout(past_actions, chi_stream, 4)
        provider = ActorActions(actor, past_actions)
        for t in range(4):
            provider.action(t)
            provider.observe(t, chi_stream[t])
    assert np.array_equal(provider.history[0].data, Tensor(past_actions[:, -1]).data)
    for got, want in zip(provider.predictions, expected):
        assert got.data.tobytes() == want.data.tobytes()


def test_provider_cannot_skip_ahead(cfg: ModelConfig, past_actions) -> None:
    provider = ActorActions(Actor(cfg, rng_for(0, 1)), past_actions)
    provider.action(0)
    with pytest.raises(ProviderError):
        provider.action(1)


def test_dropout_only_in_training(cfg: ModelConfig, chi_stream, past_actions) -> None:
    actor = Actor(cfg, rng_for(0, 1))
    with no_grad():
        clean = [p.data for p in actor.rollout(past_actions, chi_stream, 4)]
        actor.train(np.random.default_rng(3))
        dropped = [p.data for p in actor.rollout(past_actions, chi_stream, 4)]
        actor.eval()
        again = [p.data for p in actor.rollout(past_actions, chi_stream, 4)]
    assert any(not np.array_equal(a, b) for a, b in zip(clean, dropped))
    assert all(np.array_equal(a, b) for a, b in zip(clean, again))


def test_centered_decoder(cfg: ModelConfig, chi_stream, past_actions) -> None:
    cfg = replace(cfg, actor_normalize=True)
    with no_grad():
        predictions = Actor(cfg, rng_for(0, 1)).rollout(past_actions, chi_stream, 2)
    assert predictions[1].shape == (2, 2)


def test_actor_reads_generator_latents(cfg: ModelConfig, past_actions) -> None:
    generator = Generator(cfg, rng_for(0, 0))
    assert generator.latent_shape == (3, 4, 4)
    actor = Actor(cfg, rng_for(0, 1))
    rng = np.random.default_rng(2)
    frames = rng.random((2, 3, 1, 32, 32))
    flows = np.concatenate([np.zeros_like(frames[:, :1]), np.diff(frames, axis=1)], axis=1)
    with no_grad():
        provider = ActorActions(actor, past_actions)
        state = generator.warmup(frames, flows, past_actions)
        out = generator.rollout(state, provider, 3)
    assert len(provider.predictions) == 3
    assert len(provider.history) == 3
    assert out.horizon == 3


def test_zero_actor_predicts_zero(cfg: ModelConfig, chi_stream, past_actions) -> None:
    actor = Actor(cfg, rng_for(0, 1))
    for param in actor.params.values():
        param.data = np.zeros_like(param.data)
    with no_grad():
        predictions = actor.rollout(past_actions, chi_stream, 4)
    assert all(np.all(p.data == 0.0) for p in predictions)


@pytest.mark.parametrize("t", range(3))
def test_prediction_ignores_later_latents(cfg: ModelConfig, chi_stream, past_actions, t: int) -> None:
    actor = Actor(cfg, rng_for(0, 1))
    later = list(chi_stream)
    later[t + 1] = Tensor(chi_stream[t + 1].data + 1.0)
    with no_grad():
        clean = actor.rollout(past_actions, chi_stream, 4)
        changed = actor.rollout(past_actions, later, 4)
    for got, want in zip(changed[: t + 1], clean[: t + 1]):
        assert got.data.tobytes() == want.data.tobytes()
    assert changed[t + 1].data.tobytes() != clean[t + 1].data.tobytes()


def test_actor_emitting_true_actions_matches_ground_truth_rollout(cfg: ModelConfig, past_actions) -> None:
    generator = Generator(cfg, rng_for(0, 0))
    actor = Actor(cfg, rng_for(0, 1))
    rng = np.random.default_rng(4)
    frames = rng.random((2, 3, 1, 32, 32))
    flows = np.concatenate([np.zeros_like(frames[:, :1]), np.diff(frames, axis=1)], axis=1)
    future = rng.uniform(-1, 1, (2, 3, 2))
    emitted = iter([Tensor(future[:, t]) for t in range(3)])
    actor.decode = lambda chi, alpha: next(emitted)
    with no_grad():
        acting = generator.rollout(generator.warmup(frames, flows, past_actions), ActorActions(actor, past_actions), 3)
        replay = generator.rollout(
            generator.warmup(frames, flows, past_actions), GroundTruthActions(past_actions, future), 3
        )
    assert acting.stacked_frames().data.tobytes() == replay.stacked_frames().data.tobytes()
    assert acting.stacked_flows().data.tobytes() == replay.stacked_flows().data.tobytes()
