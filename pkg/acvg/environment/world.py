"""A partially observable toy world seen through a moving top-down camera.

A smooth, toroidally wrapped texture is populated with drifting discs; a
unicycle camera driven by a waypoint-seeking controller renders an egocentric
window every `dt` seconds. The recorded (forward velocity, turn rate) pairs
have the same structure as a differential-drive robot's commands.
"""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from loguru import logger
from scipy.ndimage import gaussian_filter

from acvg.errors import SequenceLengthError
from acvg.utils.config import WorldConfig
from acvg.utils.dataset import SequenceRecord

Seed = Union[int, np.random.SeedSequence]


def make_texture(cfg: WorldConfig, rng: np.random.Generator) -> np.ndarray:
    size = cfg.texture_size
    noise = rng.random((size, size, cfg.channels))
    smooth = gaussian_filter(noise, sigma=(cfg.texture_smoothing, cfg.texture_smoothing, 0), mode="wrap")
    low = smooth.min(axis=(0, 1), keepdims=True)
    high = smooth.max(axis=(0, 1), keepdims=True)
    return (smooth - low) / np.maximum(high - low, 1e-12)


def wrap_angle(angle: float) -> float:
    return float((angle + np.pi) % (2.0 * np.pi) - np.pi)


def toroidal_delta(delta: np.ndarray, size: float) -> np.ndarray:
    return (delta + size / 2.0) % size - size / 2.0


@dataclass
class Sprites:
    positions: np.ndarray  # (k, 2) x, y in px
    velocities: np.ndarray  # (k, 2) px/s
    radii: np.ndarray  # (k,)
    colors: np.ndarray  # (k, C)

    @classmethod
    def random(cls, cfg: WorldConfig, rng: np.random.Generator) -> "Sprites":
        k = cfg.num_sprites
        headings = rng.uniform(0.0, 2.0 * np.pi, size=k)
        speeds = rng.uniform(0.5, 1.0, size=k) * cfg.sprite_speed
        return cls(
            positions=rng.uniform(0.0, cfg.texture_size, size=(k, 2)),
            velocities=np.stack([np.cos(headings), np.sin(headings)], axis=1) * speeds[:, None],
            radii=rng.uniform(cfg.sprite_radius[0], cfg.sprite_radius[1], size=k),
            colors=rng.random((k, cfg.channels)),
        )

    def advance(self, dt: float, size: float) -> None:
        self.positions = (self.positions + self.velocities * dt) % size


class World:
    def __init__(self, cfg: WorldConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.texture = make_texture(cfg, rng)
        self.sprites = Sprites.random(cfg, rng)
        size = cfg.texture_size
        self.pose = np.array([rng.uniform(0, size), rng.uniform(0, size), rng.uniform(-np.pi, np.pi)])

        rows = np.arange(cfg.height) - (cfg.height - 1) / 2.0
        cols = np.arange(cfg.width) - (cfg.width - 1) / 2.0
        self._v, self._u = np.meshgrid(rows, cols, indexing="ij")

    def sample_points(self) -> tuple[np.ndarray, np.ndarray]:
        """World coordinates of every window pixel; columns point along the heading."""
        px, py, theta = self.pose
        if self.cfg.mode == "translate":
            theta = 0.0
        cos, sin = np.cos(theta), np.sin(theta)
        wx = px + cos * self._u - sin * self._v
        wy = py + sin * self._u + cos * self._v
        return wx, wy

    def render(self) -> np.ndarray:
        size = self.cfg.texture_size
        wx, wy = self.sample_points()
        x0f, y0f = np.floor(wx), np.floor(wy)
        fx, fy = (wx - x0f)[..., None], (wy - y0f)[..., None]
        x0, y0 = x0f.astype(np.int64) % size, y0f.astype(np.int64) % size
        x1, y1 = (x0 + 1) % size, (y0 + 1) % size
        tex = self.texture
        frame = (
            tex[y0, x0] * (1 - fx) * (1 - fy)
            + tex[y0, x1] * fx * (1 - fy)
            + tex[y1, x0] * (1 - fx) * fy
            + tex[y1, x1] * fx * fy
        )
        for position, radius, color in zip(self.sprites.positions, self.sprites.radii, self.sprites.colors):
            dx = toroidal_delta(wx - position[0], size)
            dy = toroidal_delta(wy - position[1], size)
            alpha = np.clip(radius + 0.5 - np.hypot(dx, dy), 0.0, 1.0)[..., None]
            frame = frame * (1 - alpha) + color * alpha
        return np.clip(frame, 0.0, 1.0).astype(np.float32)

    def step(self, action: np.ndarray) -> None:
        """Unicycle integration of (v [m/s], omega [rad/s]) over one interval."""
        v, omega = float(action[0]), float(action[1])
        dt = self.cfg.dt
        theta = self.pose[2] + omega * dt
        distance = v * dt * self.cfg.pixels_per_meter
        self.pose = np.array(
            [
                (self.pose[0] + distance * np.cos(theta)) % self.cfg.texture_size,
                (self.pose[1] + distance * np.sin(theta)) % self.cfg.texture_size,
                wrap_angle(theta),
            ]
        )
        self.sprites.advance(dt, self.cfg.texture_size)


class WaypointPolicy:
    """Smooth controller: turn toward a waypoint, slow down near it."""

    def __init__(self, cfg: WorldConfig, rng: np.random.Generator, start_pose: np.ndarray):
        self.cfg = cfg
        self.rng = rng
        self.waypoint = start_pose[:2].copy()
        if cfg.policy == "waypoint":
            self.waypoint = self._new_waypoint()
        self.low = np.array([r[0] for r in cfg.action_ranges])
        self.high = np.array([r[1] for r in cfg.action_ranges])
        self.slew = np.array(cfg.slew_limit)

    def _new_waypoint(self) -> np.ndarray:
        return self.rng.uniform(0.0, self.cfg.texture_size, size=2)

    def command(self, pose: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        if cfg.policy == "constant":
            return np.array(cfg.constant_action, dtype=np.float64)
        delta = toroidal_delta(self.waypoint - pose[:2], cfg.texture_size)
        distance = float(np.hypot(*delta))
        if cfg.policy == "waypoint" and distance < cfg.waypoint_radius:
            self.waypoint = self._new_waypoint()
            delta = toroidal_delta(self.waypoint - pose[:2], cfg.texture_size)
            distance = float(np.hypot(*delta))
        if distance == 0.0:
            return np.zeros(2)
        error = wrap_angle(np.arctan2(delta[1], delta[0]) - pose[2])
        v = min(self.high[0], cfg.speed_gain * distance) * max(np.cos(error), 0.0)
        return np.array([v, cfg.heading_gain * error])

    def act(self, pose: np.ndarray, previous: Optional[np.ndarray]) -> np.ndarray:
        action = np.clip(self.command(pose), self.low, self.high)
        if previous is not None:
            action = np.clip(action, previous - self.slew, previous + self.slew)
        return action


def simulate_sequence(cfg: WorldConfig, seed: Seed, length: int) -> SequenceRecord:
    if length < 2:
        raise SequenceLengthError(f"A sequence needs at least 2 frames, got {length}.")
    rng = np.random.default_rng(seed)
    world = World(cfg, rng)
    policy = WaypointPolicy(cfg, rng, world.pose)

    frames = np.empty((length, cfg.height, cfg.width, cfg.channels), dtype=np.float32)
    actions = np.empty((length, 2), dtype=np.float64)
    previous = None
    for t in range(length):
        frames[t] = world.render()
        previous = policy.act(world.pose, previous)
        actions[t] = previous
        world.step(previous)

    logger.debug(f"Simulated {length} frames, final pose {world.pose}.")
    return SequenceRecord(frames=frames, actions_raw=actions, dt=cfg.dt, ranges=tuple(cfg.action_ranges))
