import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

from acvg.errors import ConfigError

INT_FIELDS = (
    "batch_size",
    "clip_gap",
    "clip_len",
    "eval_frames",
    "future_frames",
    "lstm_channels",
    "actor_hidden",
    "actor_dense",
    "log_every_n",
    "n_a",
    "n_dual",
    "n_g",
    "num_workers",
    "past_frames",
    "seed",
)
FLOAT_FIELDS = (
    "actor_dropout",
    "grad_clip",
    "lambda1",
    "lambda2",
    "lambda_action",
    "learning_rate",
    "mu",
)
TUPLE_FIELDS = ("actor_channels", "betas", "disc_channels", "encoder_channels")
BOOL_FIELDS = ("actor_normalize",)
PHASES = ("generator", "actor", "dual", "full")

# Fixed by the training protocol; surfaced in every run banner.
DT2_EVAL_FRAMES = 15
NOISE_SIGMA = 0.2


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda_action: float = 2.0
    mu: float = 1e-4
    beta: int = 1
    gamma: int = 0

    def __post_init__(self) -> None:
        if self.lambda1 not in (1, 2) or self.lambda2 not in (1, 2):
            raise ConfigError(f"lambda1/lambda2 must be 1 or 2, got {self.lambda1}/{self.lambda2}")
        if self.lambda_action != 2:
            raise ConfigError(f"lambda_action must be 2, got {self.lambda_action}")
        if self.mu < 0:
            raise ConfigError(f"mu must be non-negative, got {self.mu}")
        if self.beta not in (0, 1) or self.gamma not in (0, 1):
            raise ConfigError(f"phase gates must be 0 or 1, got beta={self.beta} gamma={self.gamma}")


PHASE_GATES = {"generator": (1, 0), "actor": (0, 1), "dual": (1, 1)}


@dataclass
class PhaseConfig:
    phase: str = "full"
    n_g: int = 2000
    n_a: int = 1000
    n_dual: int = 1000
    learning_rate: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 4
    past_frames: int = 5
    future_frames: int = 10
    eval_frames: int = 20
    clip_len: int = 50
    clip_gap: int = 10
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda_action: float = 2.0
    mu: float = 1e-4
    grad_clip: float = 5.0
    seed: int = 0
    data_dir: str = "data"
    ckpt_path: str = "ckpts"
    log_every_n: int = 100
    num_workers: int = 0
    encoder_channels: tuple[int, ...] = (16, 32, 64)
    lstm_channels: int = 64
    actor_hidden: int = 2
    actor_channels: tuple[int, ...] = (32, 16)
    actor_dense: int = 32
    actor_dropout: float = 0.0
    actor_normalize: bool = False
    disc_channels: tuple[int, ...] = (16, 32, 64, 64)
    wandb_mode: str = "disabled"

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ConfigError(f"phase must be one of {PHASES}, got {self.phase!r}")
        if min(self.n_g, self.n_a, self.n_dual) < 0:
            raise ConfigError("iteration counts must be non-negative")
        if self.past_frames < 2:
            raise ConfigError(f"past_frames must be at least 2, got {self.past_frames}")
        if self.future_frames < 1:
            raise ConfigError(f"future_frames must be at least 1, got {self.future_frames}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not 0.0 <= self.actor_dropout < 1.0:
            raise ConfigError(f"actor_dropout must lie in [0, 1), got {self.actor_dropout}")
        if len(self.encoder_channels) != 3:
            raise ConfigError("encoder_channels needs exactly three stage widths")
        if len(self.actor_channels) != 2:
            raise ConfigError("actor_channels needs exactly two stage widths")
        if len(self.disc_channels) != 4:
            raise ConfigError("disc_channels needs exactly four layer widths")
        # Validates the loss constants eagerly.
        self.loss_weights("dual")

    def loss_weights(self, phase: str) -> LossWeights:
        beta, gamma = PHASE_GATES[phase]
        return LossWeights(
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            lambda_action=self.lambda_action,
            mu=self.mu,
            beta=beta,
            gamma=gamma,
        )

    def iterations(self, phase: str) -> int:
        return {"generator": self.n_g, "actor": self.n_a, "dual": self.n_dual}[phase]

    def banner(self) -> str:
        settings = ", ".join(f"{k}={v}" for k, v in asdict(self).items())
        protocol = (
            f"clip_len={self.clip_len} gap={self.clip_gap} n={self.past_frames} "
            f"T_train={self.future_frames} T_eval={self.eval_frames} T_dt2={DT2_EVAL_FRAMES} "
            f"mu={self.mu} lambda1={self.lambda1} lambda2={self.lambda2} "
            f"lambda_a={self.lambda_action} lr={self.learning_rate} noise_sigma={NOISE_SIGMA}"
        )
        return f"Config: {settings}\nProtocol: {protocol}\nSeed: {self.seed}"


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to rebuild the three networks; stored in checkpoints."""

    height: int = 32
    width: int = 32
    channels: int = 3
    action_dim: int = 2
    past_frames: int = 5
    future_frames: int = 10
    encoder_channels: tuple[int, ...] = (16, 32, 64)
    lstm_channels: int = 64
    kernel_size: int = 3
    actor_hidden: int = 2
    actor_channels: tuple[int, ...] = (32, 16)
    actor_dense: int = 32
    actor_dropout: float = 0.0
    actor_normalize: bool = False
    disc_channels: tuple[int, ...] = (16, 32, 64, 64)

    def __post_init__(self) -> None:
        if self.height % 32 or self.width % 32:
            raise ConfigError(
                f"frame size {self.height}x{self.width} must be a multiple of 32 "
                "(three encoder pools, two actor pools)"
            )

    @classmethod
    def from_phase_config(
        cls, cfg: PhaseConfig, height: int, width: int, channels: int, action_dim: int = 2
    ) -> "ModelConfig":
        return cls(
            height=height,
            width=width,
            channels=channels,
            action_dim=action_dim,
            past_frames=cfg.past_frames,
            future_frames=cfg.future_frames,
            encoder_channels=tuple(cfg.encoder_channels),
            lstm_channels=cfg.lstm_channels,
            actor_hidden=cfg.actor_hidden,
            actor_channels=tuple(cfg.actor_channels),
            actor_dense=cfg.actor_dense,
            actor_dropout=cfg.actor_dropout,
            actor_normalize=cfg.actor_normalize,
            disc_channels=tuple(cfg.disc_channels),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        raw = json.loads(text)
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})


@dataclass
class WorldConfig:
    texture_size: int = 128
    texture_smoothing: float = 3.0
    num_sprites: int = 6
    sprite_radius: tuple[float, float] = (2.0, 5.0)
    sprite_speed: float = 8.0  # px/s
    height: int = 32
    width: int = 32
    channels: int = 3
    dt: float = 0.1
    pixels_per_meter: float = 100.0
    mode: str = "unicycle"
    policy: str = "waypoint"
    constant_action: tuple[float, float] = (0.1, 0.0)
    waypoint_radius: float = 4.0
    heading_gain: float = 2.0
    speed_gain: float = 0.01
    slew_limit: tuple[float, float] = (0.02, 0.3)
    action_ranges: tuple[tuple[float, float], ...] = field(default=((0.0, 0.1), (-1.8, 1.8)))
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("unicycle", "translate"):
            raise ConfigError(f"mode must be 'unicycle' or 'translate', got {self.mode!r}")
        if self.policy not in ("waypoint", "hold", "constant"):
            raise ConfigError(f"policy must be 'waypoint', 'hold' or 'constant', got {self.policy!r}")
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise ConfigError(f"invalid frame extents {self.height}x{self.width}x{self.channels}")
        for low, high in self.action_ranges:
            if high <= low:
                raise ConfigError(f"action range ({low}, {high}) is empty")


def _parse_tuple(value: str) -> tuple:
    items = [item.strip() for item in value.strip().strip("()").split(",") if item.strip()]
    return tuple(float(item) if any(c in item for c in ".eE") else int(item) for item in items)


TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


def _parse_bool(value: str) -> bool:
    word = value.lower()
    if word not in TRUE_WORDS + FALSE_WORDS:
        raise ValueError(f"expected one of {TRUE_WORDS + FALSE_WORDS}")
    return word in TRUE_WORDS


def generate_config(config_file: Optional[str]) -> PhaseConfig:
    # If the file doesn't exist, return default config.
    if config_file is None or not os.path.exists(config_file):
        cfg = PhaseConfig()
    else:
        known = {f.name for f in fields(PhaseConfig)}
        kwargs: dict[str, Any] = {}
        with open(config_file, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{config_file}:{lineno}: expected 'key = value', got {line!r}")
                k, v = (part.strip() for part in line.split("=", 1))
                if k not in known:
                    raise ConfigError(f"{config_file}:{lineno}: unknown key {k!r}")

                # Parse integers, floats, booleans and tuple args.
                try:
                    if k in INT_FIELDS:
                        kwargs[k] = int(v)
                    elif k in FLOAT_FIELDS:
                        kwargs[k] = float(v)
                    elif k in TUPLE_FIELDS:
                        kwargs[k] = _parse_tuple(v)
                    elif k in BOOL_FIELDS:
                        kwargs[k] = _parse_bool(v)
                    else:  # String fields are not parsed.
                        kwargs[k] = v
                except ValueError as e:
                    raise ConfigError(f"{config_file}:{lineno}: bad value for {k!r}: {v!r}") from e

        cfg = PhaseConfig(**kwargs)

    # Create model checkpoint folder if needed.
    os.makedirs(cfg.ckpt_path, exist_ok=True)

    return cfg
