import csv
import dataclasses
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import wandb
from loguru import logger
from tqdm import tqdm

from acvg.errors import CheckpointError, ConfigError, NumericError
from acvg.losses import (
    LossParts,
    action_loss,
    adversarial_gen_loss,
    discriminate,
    discriminator_loss,
    recon_flow_loss,
    recon_image_loss,
    total_loss,
)
from acvg.models.generator import Rollout
from acvg.models.providers import ActionProvider, ActorActions, FixedActions
from acvg.tensor import Adam, Tensor, backward, clip_grad_norm
from acvg.tensor import functional as F
from acvg.utils.checkpoint import Checkpoint, create_checkpoint, save_checkpoint
from acvg.utils.config import ModelConfig, PhaseConfig, generate_config
from acvg.utils.dataset import ClipBatch, SequenceRecord, prepare_clips
from acvg.utils.storage import load_dataset
from acvg.utils.streaming_dataset import BatchStream
from acvg.utils.utils import rng_for, setup_logging, timer

MAIN = __name__ == "__main__"

PHASE_ORDER = ("generator", "actor", "dual")
PHASE_KEYS = {"generator": 0, "actor": 1, "dual": 2}
DROPOUT_KEY = 7
LOSS_COLUMNS = ("step", "phase", "recon_image", "recon_flow", "adv", "action", "total")


@dataclass
class LossRow:
    step: int
    phase: str
    recon_image: Optional[float] = None
    recon_flow: Optional[float] = None
    adv: Optional[float] = None
    action: Optional[float] = None
    total: float = 0.0

    def as_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


class LossLog:
    def __init__(self, rows: Optional[list[LossRow]] = None):
        self.rows: list[LossRow] = rows or []

    def append(self, row: LossRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str, phase: Optional[str] = None) -> np.ndarray:
        values = [getattr(r, name) for r in self.rows if phase is None or r.phase == phase]
        return np.array([v for v in values if v is not None], dtype=np.float64)

    def write_csv(self, path: str) -> None:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(LOSS_COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [row.step, row.phase]
                    + ["" if getattr(row, c) is None else repr(getattr(row, c)) for c in LOSS_COLUMNS[2:]]
                )

    @classmethod
    def read_csv(cls, path: str) -> "LossLog":
        rows = []
        with open(path, "r", encoding="utf-8", newline="") as f:
            for record in csv.DictReader(f):
                values = {c: float(record[c]) if record[c] != "" else None for c in LOSS_COLUMNS[2:]}
                rows.append(LossRow(step=int(record["step"]), phase=record["phase"], **values))
        return cls(rows)


def rollout_batch(ckpt: Checkpoint, batch: ClipBatch, provider: ActionProvider) -> Rollout:
    state = ckpt.generator.warmup(batch.past_frames, batch.past_flows, batch.past_actions)
    return ckpt.generator.rollout(state, provider, batch.horizon)


def _check_finite(loss: Tensor, what: str) -> float:
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(f"{what} loss is {value}")
    return value


def discriminator_step(ckpt: Checkpoint, batch: ClipBatch, fake: Tensor, optimiser: Adam, cfg: PhaseConfig) -> float:
    d_real = discriminate(ckpt.discriminator, batch.past_frames, batch.future_frames)
    d_fake = discriminate(ckpt.discriminator, batch.past_frames, fake.detach())
    loss = discriminator_loss(d_real, d_fake)
    value = _check_finite(loss, "discriminator")
    backward(loss)
    clip_grad_norm(ckpt.discriminator.params, cfg.grad_clip)
    optimiser.step()
    return value


def train_step(
    ckpt: Checkpoint, batch: ClipBatch, phase: str, cfg: PhaseConfig, optimisers: dict[str, Adam], step: int
) -> LossRow:
    """One gated update. The generator phase holds a_0 fixed; the actor and
    dual phases wire in the delayed actor."""
    weights = cfg.loss_weights(phase)
    if phase == "generator":
        provider: ActionProvider = FixedActions(batch.past_actions)
    else:
        provider = ActorActions(ckpt.actor, batch.past_actions)
    rollout = rollout_batch(ckpt, batch, provider)

    parts = LossParts()
    if weights.beta:
        frames = rollout.stacked_frames()
        discriminator_step(ckpt, batch, frames, optimisers["discriminator"], cfg)
        parts.recon_image = recon_image_loss(batch.future_frames, frames, weights.lambda1, weights.lambda2)
        parts.recon_flow = recon_flow_loss(
            batch.future_flows, rollout.stacked_flows(), weights.lambda1, weights.lambda2
        )
        parts.adversarial = adversarial_gen_loss(discriminate(ckpt.discriminator, batch.past_frames, frames))
    if weights.gamma:
        parts.action = action_loss(batch.future_actions, F.stack(provider.predictions, axis=1))

    loss = total_loss(parts, weights)
    total = _check_finite(loss, f"{phase} step {step}")
    backward(loss)
    if weights.beta:
        ckpt.discriminator.params.zero_grad()
        clip_grad_norm(ckpt.generator.params, cfg.grad_clip)
        optimisers["generator"].step()
    if weights.gamma:
        clip_grad_norm(ckpt.actor.params, cfg.grad_clip)
        optimisers["actor"].step()

    return LossRow(
        step=step,
        phase=phase,
        recon_image=parts.value("recon_image"),
        recon_flow=parts.value("recon_flow"),
        adv=parts.value("adversarial"),
        action=parts.value("action"),
        total=total,
    )


def _run_phase(phase: str, cfg: PhaseConfig, clips: Sequence[SequenceRecord], ckpt: Checkpoint, log: LossLog) -> Checkpoint:
    iterations = cfg.iterations(phase)
    weights = cfg.loss_weights(phase)
    logger.info(f"Starting {phase} phase: {iterations} iterations, beta={weights.beta}, gamma={weights.gamma}.")
    optimisers = {name: Adam(store, cfg.learning_rate, cfg.betas) for name, store in ckpt.stores()}
    run = wandb.init(project="acvg", name=phase, config=dataclasses.asdict(cfg), mode=cfg.wandb_mode)

    if phase == "actor":
        ckpt.generator.params.requires_grad_(False)
    if cfg.actor_dropout > 0:
        ckpt.actor.train(rng_for(cfg.seed, PHASE_KEYS[phase], DROPOUT_KEY))
    try:
        with BatchStream(
            clips,
            cfg.batch_size,
            cfg.past_frames,
            cfg.future_frames,
            cfg.seed,
            PHASE_KEYS[phase],
            cfg.num_workers,
        ) as batches:
            for i in tqdm(range(iterations), desc=phase):
                row = train_step(ckpt, next(batches), phase, cfg, optimisers, ckpt.global_step)
                ckpt.global_step += 1
                log.append(row)
                run.log(row.as_dict())
                if i % cfg.log_every_n == 0:
                    logger.info(f"{phase} step {row.step}: {row.as_dict()}")
    finally:
        ckpt.generator.params.requires_grad_(True)
        ckpt.actor.eval()
        run.finish()

    if phase not in ckpt.completed_phases:
        ckpt.completed_phases.append(phase)
    logger.info(f"Finished {phase} phase at global step {ckpt.global_step}.")
    return ckpt


def _check_compatible(ckpt: Checkpoint, cfg: PhaseConfig) -> None:
    model = ckpt.config
    if (model.past_frames, model.future_frames) != (cfg.past_frames, cfg.future_frames):
        raise ConfigError(
            f"checkpoint was built for {model.past_frames}+{model.future_frames} frames, "
            f"config asks for {cfg.past_frames}+{cfg.future_frames}"
        )


def new_checkpoint(cfg: PhaseConfig, clips: Sequence[SequenceRecord]) -> Checkpoint:
    height, width, channels = clips[0].frame_shape
    model_cfg = ModelConfig.from_phase_config(cfg, height, width, channels, clips[0].actions_raw.shape[1])
    return create_checkpoint(model_cfg, cfg.seed)


@timer(logger)
def train_generator_phase(
    cfg: PhaseConfig, clips: Sequence[SequenceRecord], ckpt: Optional[Checkpoint] = None, log: Optional[LossLog] = None
) -> Checkpoint:
    ckpt = ckpt or new_checkpoint(cfg, clips)
    _check_compatible(ckpt, cfg)
    return _run_phase("generator", cfg, clips, ckpt, log if log is not None else LossLog())


@timer(logger)
def train_actor_phase(
    cfg: PhaseConfig, clips: Sequence[SequenceRecord], ckpt: Optional[Checkpoint], log: Optional[LossLog] = None
) -> Checkpoint:
    if ckpt is None:
        raise CheckpointError("the actor phase needs a trained generator checkpoint")
    ckpt.require_phases("generator")
    _check_compatible(ckpt, cfg)
    return _run_phase("actor", cfg, clips, ckpt, log if log is not None else LossLog())


@timer(logger)
def train_dual_phase(
    cfg: PhaseConfig, clips: Sequence[SequenceRecord], ckpt: Optional[Checkpoint], log: Optional[LossLog] = None
) -> Checkpoint:
    if ckpt is None:
        raise CheckpointError("the dual phase needs a checkpoint with trained generator and actor")
    ckpt.require_phases("generator", "actor")
    _check_compatible(ckpt, cfg)
    return _run_phase("dual", cfg, clips, ckpt, log if log is not None else LossLog())


PHASE_FUNCTIONS = {"generator": train_generator_phase, "actor": train_actor_phase, "dual": train_dual_phase}


def phase_checkpoint_path(path: str, phase: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}.{phase}{ext or '.ckpt'}"


def loss_log_path(path: str) -> str:
    return f"{os.path.splitext(path)[0]}.losses.csv"


RECON_COLUMNS = ("recon_image", "recon_flow")


def loss_ratio(log: LossLog, phase: str, columns: Sequence[str] = RECON_COLUMNS, window: int = 100) -> float:
    """Mean of the summed `columns` over the last `window` steps of `phase`
    divided by the mean over its first `window` steps."""
    unknown = [c for c in columns if c not in LOSS_COLUMNS[2:]]
    if unknown or not columns:
        raise ConfigError(f"unknown loss column(s) {unknown}; choose from {list(LOSS_COLUMNS[2:])}")
    rows = [r for r in log.rows if r.phase == phase]
    if window < 1 or len(rows) < window:
        raise ConfigError(f"{phase} phase has {len(rows)} logged steps, need a window of {window}")
    totals = np.array([sum(getattr(r, c) or 0.0 for c in columns) for r in rows], dtype=np.float64)
    first = totals[:window].mean()
    if first <= 0.0:
        raise NumericError(f"{phase} phase starts with a non-positive loss {first}")
    return float(totals[-window:].mean() / first)


def train_full(
    cfg: PhaseConfig,
    clips: Sequence[SequenceRecord],
    ckpt_path: Optional[str] = None,
    log: Optional[LossLog] = None,
) -> Checkpoint:
    """Generator, actor and dual phases in order.

    With `ckpt_path`, the generator and actor results are written next to it
    (`<stem>.generator<ext>`, `<stem>.actor<ext>`) and the final model to it.
    """
    log = log if log is not None else LossLog()
    ckpt = None
    for phase in PHASE_ORDER:
        ckpt = PHASE_FUNCTIONS[phase](cfg, clips, ckpt, log)
        if ckpt_path is not None:
            save_checkpoint(ckpt, ckpt_path if phase == "dual" else phase_checkpoint_path(ckpt_path, phase))
    return ckpt


def load_training_clips(cfg: PhaseConfig) -> list[SequenceRecord]:
    records = load_dataset(cfg.data_dir, "train")
    return prepare_clips(records, cfg.clip_len, cfg.clip_gap, cfg.past_frames, cfg.future_frames)


if MAIN:
    setup_logging("./logs/train.log")
    train_config: PhaseConfig = generate_config("./acvg/config.txt")
    logger.info(train_config.banner())
    training_clips = load_training_clips(train_config)
    final = train_full(train_config, training_clips, os.path.join(train_config.ckpt_path, "acvg.ckpt"))
