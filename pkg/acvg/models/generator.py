"""Action-conditioned frame generator.

Past frames and flow maps are encoded separately. Encoded flows, augmented
with tiled action planes, drive a ConvLSTM whose output (the motion kernel)
is fused with the latest image features into the latent state chi. A decoder
with skip connections from the image encoder maps chi back to a frame.
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from loguru import logger

from acvg.errors import InsufficientHistoryError, ShapeError
from acvg.models import layers
from acvg.models.providers import ActionProvider
from acvg.tensor import ParamStore, Tensor
from acvg.tensor import functional as F
from acvg.utils.config import ModelConfig
from acvg.utils.utils import count_parameters


@dataclass
class GeneratorState:
    h: Tensor
    c: Tensor
    x_hat: Optional[Tensor] = None
    skips: list[Tensor] = field(default_factory=list)
    frame: Optional[Tensor] = None
    flow: Optional[Tensor] = None

    def clone(self) -> "GeneratorState":
        # Tensors are never mutated in place during a forward pass.
        return replace(self, skips=list(self.skips))


@dataclass
class Rollout:
    frames: list[Tensor]
    flows: list[Tensor]
    latents: list[Tensor]

    @property
    def horizon(self) -> int:
        return len(self.frames)

    def stacked_frames(self) -> Tensor:
        return F.stack(self.frames, axis=1)

    def stacked_flows(self) -> Tensor:
        return F.stack(self.flows, axis=1)


class Generator:
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.params = ParamStore()
        k = cfg.kernel_size
        widths = list(cfg.encoder_channels)
        for branch in ("encoder_image", "encoder_flow"):
            c_in = cfg.channels
            for i, width in enumerate(widths):
                layers.add_conv(self.params, f"{branch}.{i}", width, c_in, k, rng, gain=layers.LEAKY_GAIN)
                c_in = width

        deepest = widths[-1]
        layers.add_conv_lstm(self.params, "flow_lstm", deepest + cfg.action_dim, cfg.lstm_channels, k, rng)
        layers.add_conv(
            self.params, "combine.0", deepest, deepest + cfg.lstm_channels, k, rng, gain=layers.LEAKY_GAIN
        )
        layers.add_conv(self.params, "combine.1", deepest, deepest, k, rng)

        c_in = deepest
        outputs = widths[-2::-1] + [cfg.channels]
        for i, (skip, width) in enumerate(zip(widths[::-1], outputs)):
            gain = layers.LEAKY_GAIN if i < len(widths) - 1 else 1.0
            layers.add_conv_transpose(self.params, f"decoder.{i}", c_in + skip, width, k, rng, gain=gain)
            c_in = width

        logger.info(f"Generator has {count_parameters(self.params)} parameters.")

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        scale = 2 ** len(self.cfg.encoder_channels)
        return self.cfg.encoder_channels[-1], self.cfg.height // scale, self.cfg.width // scale

    def _check_frame(self, x: Tensor) -> None:
        expected = (self.cfg.channels, self.cfg.height, self.cfg.width)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"expected (N, {', '.join(map(str, expected))}) frames, got {x.shape}")

    def _encode(self, branch: str, h: Tensor) -> tuple[Tensor, list[Tensor]]:
        skips = []
        for i in range(len(self.cfg.encoder_channels)):
            h = F.leaky_relu(layers.conv(self.params, f"{branch}.{i}", h))
            skips.append(h)
            h = F.max_pool2d(h)
        return h, skips

    def encode_image(self, x) -> tuple[Tensor, list[Tensor]]:
        """Frames in [0, 1] -> (deepest features, pre-pool activation per stage)."""
        x = layers.as_input(x)
        self._check_frame(x)
        return self._encode("encoder_image", x * 2.0 - 1.0)

    def encode_flow(self, o) -> Tensor:
        o = layers.as_input(o)
        self._check_frame(o)
        features, _ = self._encode("encoder_flow", o)
        return features

    def augment_flow(self, o_hat: Tensor, action) -> Tensor:
        action = layers.as_input(action)
        planes = F.tile_planes(action, o_hat.shape[2], o_hat.shape[3])
        return F.concat([o_hat, planes], axis=1)

    def init_state(self, batch_size: int) -> GeneratorState:
        _, height, width = self.latent_shape
        zeros = np.zeros((batch_size, self.cfg.lstm_channels, height, width))
        return GeneratorState(h=Tensor(zeros), c=Tensor(zeros))

    def flow_step(self, augmented: Tensor, state: GeneratorState) -> Tensor:
        h, c = F.conv_lstm_step(
            augmented, state.h, state.c, self.params["flow_lstm.weight"], self.params["flow_lstm.bias"]
        )
        state.h, state.c = h, c
        return h

    def combine(self, x_hat: Tensor, motion: Tensor) -> Tensor:
        if x_hat.ndim != 4 or motion.ndim != 4 or x_hat.shape[2:] != motion.shape[2:]:
            raise ShapeError(f"combine: image features {x_hat.shape} and motion kernel {motion.shape} disagree")
        z = F.concat([x_hat, motion], axis=1)
        z = F.leaky_relu(layers.conv(self.params, "combine.0", z))
        return layers.conv(self.params, "combine.1", z)

    def decode(self, chi: Tensor, skips: list[Tensor]) -> Tensor:
        stages = len(self.cfg.encoder_channels)
        if len(skips) != stages:
            raise ShapeError(f"decode needs {stages} skip tensors, got {len(skips)}")
        h = chi
        for i, skip in enumerate(reversed(skips)):
            h = F.upsample_nearest2(h)
            if skip.shape[0] != h.shape[0] or skip.shape[2:] != h.shape[2:]:
                raise ShapeError(f"decoder stage {i}: skip {skip.shape} does not match {h.shape}")
            h = layers.conv_transpose(self.params, f"decoder.{i}", F.concat([h, skip], axis=1))
            h = F.leaky_relu(h) if i < stages - 1 else F.sigmoid(h)
        return h

    def warmup(self, past_frames, past_flows, past_actions) -> GeneratorState:
        """Run the recurrence over the conditioning window.

        Inputs are (N, n, ...) windows. Flows at window indices 0..n-2 feed the
        ConvLSTM; the flow o_0 and action a_0 of the last index are consumed
        by the first rollout step.
        """
        past_frames = layers.as_input(past_frames)
        past_flows = layers.as_input(past_flows)
        past_actions = layers.as_input(past_actions)
        history = past_frames.shape[1]
        if history < 2:
            raise InsufficientHistoryError(f"warmup needs at least 2 past frames, got {history}")
        if past_flows.shape[:2] != past_frames.shape[:2] or past_actions.shape[:2] != past_frames.shape[:2]:
            raise ShapeError(
                f"past frames {past_frames.shape}, flows {past_flows.shape} and actions "
                f"{past_actions.shape} disagree"
            )

        state = self.init_state(past_frames.shape[0])
        for k in range(history - 1):
            augmented = self.augment_flow(self.encode_flow(past_flows[:, k]), past_actions[:, k])
            self.flow_step(augmented, state)

        state.frame = past_frames[:, history - 1]
        state.flow = past_flows[:, history - 1]
        state.x_hat, state.skips = self.encode_image(state.frame)
        return state

    def step(self, state: GeneratorState, action) -> tuple[Tensor, Tensor, Tensor]:
        """One free-running step from the state's current frame and flow."""
        augmented = self.augment_flow(self.encode_flow(state.flow), action)
        motion = self.flow_step(augmented, state)
        chi = self.combine(state.x_hat, motion)
        frame = self.decode(chi, state.skips)
        flow = frame - state.frame
        return frame, flow, chi

    def rollout(self, state: GeneratorState, provider: ActionProvider, horizon: int) -> Rollout:
        if horizon < 1:
            raise ValueError(f"rollout horizon must be at least 1, got {horizon}")
        out = Rollout(frames=[], flows=[], latents=[])
        for t in range(horizon):
            frame, flow, chi = self.step(state, provider.action(t))
            provider.observe(t, chi)
            out.frames.append(frame)
            out.flows.append(flow)
            out.latents.append(chi)
            state.frame, state.flow = frame, flow
            if t < horizon - 1:
                state.x_hat, state.skips = self.encode_image(frame)
        return out
