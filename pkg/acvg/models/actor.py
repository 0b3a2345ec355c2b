from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from acvg.errors import ShapeError, StreamError
from acvg.models import layers
from acvg.tensor import ParamStore, Tensor
from acvg.tensor import functional as F
from acvg.utils.config import ModelConfig
from acvg.utils.utils import count_parameters


@dataclass
class ActorState:
    h: Tensor
    c: Tensor

    def clone(self) -> "ActorState":
        return replace(self)


class Actor:
    """Imitates the recording controller.

    An LSTM summarizes the action history into alpha_t; the decoder reads
    the generator's latent chi_{t+1} together with alpha_t and emits the next
    normalized action through a tanh.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.params = ParamStore()
        self.dropout_rng: Optional[np.random.Generator] = None
        k = cfg.kernel_size
        m = cfg.action_dim

        layers.add_lstm(self.params, "recurrent", m, cfg.actor_hidden, rng)
        c_in = cfg.encoder_channels[-1]
        for i, width in enumerate(cfg.actor_channels):
            layers.add_conv(self.params, f"chi_encoder.{i}", width, c_in, k, rng, gain=layers.LEAKY_GAIN)
            c_in = width
        scale = 2 ** (len(cfg.encoder_channels) + len(cfg.actor_channels))
        flat = cfg.actor_channels[-1] * (cfg.height // scale) * (cfg.width // scale)
        layers.add_dense(
            self.params, "decoder.0", flat + cfg.actor_hidden, cfg.actor_dense, rng, gain=layers.LEAKY_GAIN
        )
        layers.add_dense(self.params, "decoder.1", cfg.actor_dense, m, rng)

        logger.info(f"Actor has {count_parameters(self.params)} parameters.")

    def train(self, rng: np.random.Generator) -> None:
        """Enable dropout, drawing masks from `rng`."""
        self.dropout_rng = rng

    def eval(self) -> None:
        self.dropout_rng = None

    def init_state(self, batch_size: int) -> ActorState:
        zeros = np.zeros((batch_size, self.cfg.actor_hidden))
        return ActorState(h=Tensor(zeros), c=Tensor(zeros))

    def rec_step(self, action, state: ActorState) -> Tensor:
        action = layers.as_input(action)
        if action.ndim != 2 or action.shape[1] != self.cfg.action_dim:
            raise ShapeError(f"actor expects (N, {self.cfg.action_dim}) actions, got {action.shape}")
        h, c = F.lstm_step(action, state.h, state.c, self.params["recurrent.weight"], self.params["recurrent.bias"])
        state.h, state.c = h, c
        return h

    def decode(self, chi: Tensor, alpha: Tensor) -> Tensor:
        h = chi
        for i in range(len(self.cfg.actor_channels)):
            h = F.max_pool2d(F.leaky_relu(layers.conv(self.params, f"chi_encoder.{i}", h)))
        z = F.concat([F.flatten(h), alpha], axis=1)
        z = F.leaky_relu(layers.dense(self.params, "decoder.0", z))
        if self.cfg.actor_normalize:
            z = F.center(z)
        z = F.dropout(z, self.cfg.actor_dropout, self.dropout_rng)
        return F.tanh(layers.dense(self.params, "decoder.1", z))

    def warmup(self, past_actions) -> ActorState:
        """Replay a_{-n+1}..a_{-1} through the recurrence; a_0 is consumed by
        the first coupled step."""
        past_actions = layers.as_input(past_actions)
        state = self.init_state(past_actions.shape[0])
        for k in range(past_actions.shape[1]):
            self.rec_step(past_actions[:, k], state)
        return state

    def rollout(self, past_actions, chi_stream: Sequence[Tensor], horizon: int) -> list[Tensor]:
        if len(chi_stream) < horizon:
            raise StreamError(f"actor rollout needs {horizon} latent maps, got {len(chi_stream)}")
        past_actions = layers.as_input(past_actions)
        state = self.warmup(past_actions[:, :-1])
        action = past_actions[:, -1]
        predictions = []
        for t in range(horizon):
            alpha = self.rec_step(action, state)
            action = self.decode(chi_stream[t], alpha)
            predictions.append(action)
        return predictions
