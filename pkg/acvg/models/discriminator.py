import numpy as np
from loguru import logger

from acvg.errors import ShapeError
from acvg.models import layers
from acvg.tensor import ParamStore, Tensor
from acvg.tensor import functional as F
from acvg.utils.config import ModelConfig
from acvg.utils.utils import count_parameters

KERNEL, STRIDE, PADDING = 4, 2, 1


class Discriminator:
    """Scores a whole conditioning window plus horizon, stacked along channels."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.params = ParamStore()
        self.frames = cfg.past_frames + cfg.future_frames
        c_in = self.frames * cfg.channels
        for i, width in enumerate(cfg.disc_channels):
            layers.add_conv(self.params, f"layers.{i}", width, c_in, KERNEL, rng, gain=layers.LEAKY_GAIN)
            c_in = width
        scale = 2 ** len(cfg.disc_channels)
        layers.add_dense(self.params, "head", c_in * (cfg.height // scale) * (cfg.width // scale), 1, rng)

        logger.info(f"Discriminator has {count_parameters(self.params)} parameters.")

    def __call__(self, past_frames, future_frames) -> Tensor:
        past_frames = layers.as_input(past_frames)
        future_frames = layers.as_input(future_frames)
        frames = past_frames.shape[1] + future_frames.shape[1]
        if frames != self.frames:
            raise ShapeError(
                f"discriminator was built for {self.frames} frames, got "
                f"{past_frames.shape[1]} past + {future_frames.shape[1]} future"
            )
        window = F.concat([past_frames, future_frames], axis=1)
        n, _, c, h, w = window.shape
        x = F.reshape(window, (n, frames * c, h, w)) * 2.0 - 1.0
        for i in range(len(self.cfg.disc_channels)):
            x = F.leaky_relu(layers.conv(self.params, f"layers.{i}", x, stride=STRIDE, padding=PADDING))
        return F.sigmoid(layers.dense(self.params, "head", F.flatten(x)))
