import os
from dataclasses import replace

import numpy as np
import pytest

from acvg.errors import CheckpointError, ConfigError, NumericError
from acvg.models.providers import ActorActions
from acvg.tensor import Tensor, no_grad
from acvg.train import (
    LossLog,
    LossRow,
    loss_ratio,
    new_checkpoint,
    phase_checkpoint_path,
    rollout_batch,
    train_actor_phase,
    train_dual_phase,
    train_full,
    train_generator_phase,
)
from acvg.utils.checkpoint import to_bytes
from acvg.utils.config import PhaseConfig
from acvg.utils.dataset import prepare_clips
from acvg.utils.streaming_dataset import BatchStream


def snapshots(ckpt) -> dict[str, dict[str, bytes]]:
    return {network: store.snapshot() for network, store in ckpt.stores()}


def test_generator_phase_leaves_actor_untouched(tiny_phase: PhaseConfig, tiny_clips) -> None:
    before = snapshots(new_checkpoint(tiny_phase, tiny_clips))
    ckpt = train_generator_phase(tiny_phase, tiny_clips)
    after = snapshots(ckpt)
    assert after["actor"] == before["actor"]
    assert after["generator"] != before["generator"]
    assert after["discriminator"] != before["discriminator"]
    assert ckpt.completed_phases == ["generator"]
    assert ckpt.global_step == tiny_phase.n_g


def test_actor_phase_freezes_generator(tiny_phase: PhaseConfig, tiny_clips) -> None:
    ckpt = train_generator_phase(tiny_phase, tiny_clips)
    before = snapshots(ckpt)
    train_actor_phase(tiny_phase, tiny_clips, ckpt)
    after = snapshots(ckpt)
    assert after["generator"] == before["generator"]
    assert after["discriminator"] == before["discriminator"]
    assert after["actor"] != before["actor"]
    assert all(p.requires_grad for p in ckpt.generator.params.values())


def test_dual_phase_updates_both(tiny_phase: PhaseConfig, tiny_clips) -> None:
    ckpt = train_actor_phase(tiny_phase, tiny_clips, train_generator_phase(tiny_phase, tiny_clips))
    before = snapshots(ckpt)
    train_dual_phase(tiny_phase, tiny_clips, ckpt)
    after = snapshots(ckpt)
    assert after["generator"] != before["generator"]
    assert after["actor"] != before["actor"]
    assert ckpt.completed_phases == ["generator", "actor", "dual"]


def test_phase_prerequisites(tiny_phase: PhaseConfig, tiny_clips) -> None:
    with pytest.raises(CheckpointError):
        train_actor_phase(tiny_phase, tiny_clips, None)
    ckpt = new_checkpoint(tiny_phase, tiny_clips)
    with pytest.raises(CheckpointError):
        train_actor_phase(tiny_phase, tiny_clips, ckpt)
    with pytest.raises(CheckpointError):
        train_dual_phase(tiny_phase, tiny_clips, ckpt)


def test_window_mismatch_is_rejected(tiny_phase: PhaseConfig, tiny_clips) -> None:
    ckpt = train_generator_phase(tiny_phase, tiny_clips)
    with pytest.raises(ConfigError):
        train_actor_phase(replace(tiny_phase, future_frames=3), tiny_clips, ckpt)


def test_training_is_deterministic(tiny_phase: PhaseConfig, tiny_clips) -> None:
    log_a, log_b = LossLog(), LossLog()
    a = train_full(tiny_phase, tiny_clips, log=log_a)
    b = train_full(tiny_phase, tiny_clips, log=log_b)
    assert to_bytes(a) == to_bytes(b)
    assert log_a.rows == log_b.rows


def test_prefetch_threads_do_not_change_training(tiny_phase: PhaseConfig, tiny_clips) -> None:
    inline = train_generator_phase(tiny_phase, tiny_clips)
    threaded = train_generator_phase(replace(tiny_phase, num_workers=2), tiny_clips)
    assert to_bytes(inline) == to_bytes(threaded)


def test_batch_stream_order(tiny_clips) -> None:
    with BatchStream(tiny_clips, 2, 2, 2, seed=1) as inline, BatchStream(tiny_clips, 2, 2, 2, seed=1, num_workers=3) as threaded:
        for _ in range(5):
            a, b = next(inline), next(threaded)
            assert a.names == b.names
            assert a.past_frames.tobytes() == b.past_frames.tobytes()


def test_loss_log_columns(tiny_phase: PhaseConfig, tiny_clips, tmp_path) -> None:
    log = LossLog()
    ckpt = train_generator_phase(tiny_phase, tiny_clips, log=log)
    train_actor_phase(tiny_phase, tiny_clips, ckpt, log)
    assert [row.phase for row in log.rows] == ["generator"] * 2 + ["actor"] * 2
    assert [row.step for row in log.rows] == [0, 1, 2, 3]
    assert len(log.column("action", "generator")) == 0
    assert len(log.column("recon_image", "actor")) == 0
    assert np.all(np.isfinite(log.column("total")))

    path = str(tmp_path / "losses.csv")
    log.write_csv(path)
    assert LossLog.read_csv(path).rows == log.rows


def test_loss_row_omits_missing_terms() -> None:
    assert LossRow(step=3, phase="actor", action=0.5, total=1.0).as_dict() == {
        "step": 3,
        "phase": "actor",
        "action": 0.5,
        "total": 1.0,
    }


def test_loss_ratio_reads_one_phase() -> None:
    rows = [LossRow(step=i, phase="generator", recon_image=8.0 - i, recon_flow=2.0, total=0.0) for i in range(6)]
    rows += [LossRow(step=6 + i, phase="actor", action=1.0, total=1.0) for i in range(3)]
    log = LossLog(rows)
    assert loss_ratio(log, "generator", window=2) == pytest.approx((3.5 + 2.0) / (7.5 + 2.0))
    assert loss_ratio(log, "actor", ["action"], window=3) == 1.0
    with pytest.raises(ConfigError):
        loss_ratio(log, "dual")
    with pytest.raises(ConfigError):
        loss_ratio(log, "generator", ["recon_depth"], window=2)


def test_generator_phase_reduces_reconstruction(tiny_phase: PhaseConfig, tiny_clips) -> None:
    log = LossLog()
    train_generator_phase(replace(tiny_phase, n_g=40, learning_rate=1e-3, log_every_n=100), tiny_clips, log=log)
    assert loss_ratio(log, "generator", window=10) < 0.9


def test_non_finite_loss_aborts(tiny_phase: PhaseConfig, tiny_clips, monkeypatch) -> None:
    monkeypatch.setattr("acvg.train.total_loss", lambda parts, weights: Tensor(np.array(np.nan)))
    with pytest.raises(NumericError):
        train_generator_phase(tiny_phase, tiny_clips)


def test_train_full_writes_every_phase(tiny_phase: PhaseConfig, tiny_clips, tmp_path) -> None:
    path = str(tmp_path / "out" / "acvg.ckpt")
    ckpt = train_full(tiny_phase, tiny_clips, path)
    assert ckpt.completed_phases == ["generator", "actor", "dual"]
    assert ckpt.global_step == tiny_phase.n_g + tiny_phase.n_a + tiny_phase.n_dual
    for phase in ("generator", "actor"):
        assert os.path.exists(phase_checkpoint_path(path, phase))
    assert os.path.exists(path)


def test_phase_checkpoint_path() -> None:
    assert phase_checkpoint_path("ckpts/acvg.ckpt", "actor") == "ckpts/acvg.actor.ckpt"
    assert phase_checkpoint_path("model", "generator") == "model.generator.ckpt"


def test_zero_iterations_keep_initialisation(tiny_phase: PhaseConfig, tiny_clips) -> None:
    cfg = replace(tiny_phase, n_g=0, n_a=0, n_dual=0)
    ckpt = train_full(cfg, tiny_clips)
    assert snapshots(ckpt) == snapshots(new_checkpoint(cfg, tiny_clips))
    assert ckpt.global_step == 0
    assert ckpt.completed_phases == ["generator", "actor", "dual"]


class NudgedActions(ActorActions):
    """Shifts the action the actor predicts at step `nudged`."""

    def __init__(self, actor, past_actions, nudged: int):
        super().__init__(actor, past_actions)
        self.nudged = nudged

    def observe(self, t: int, chi: Tensor) -> None:
        super().observe(t, chi)
        if t == self.nudged:
            self.predictions[t] = self.predictions[t] + 0.5


@pytest.mark.parametrize("nudged", range(3))
def test_dual_rollout_is_causal(tiny_phase: PhaseConfig, tiny_records, nudged: int) -> None:
    cfg = replace(tiny_phase, future_frames=4, clip_len=8)
    clips = prepare_clips(tiny_records, clip_len=8, gap=0, history=2, horizon=4)
    ckpt = new_checkpoint(cfg, clips)
    with BatchStream(clips, 1, 2, 4, seed=0) as batches:
        batch = next(batches)
    with no_grad():
        clean = rollout_batch(ckpt, batch, ActorActions(ckpt.actor, batch.past_actions)).frames
        shifted = rollout_batch(ckpt, batch, NudgedActions(ckpt.actor, batch.past_actions, nudged)).frames
    # The action predicted at step t first drives frame t + 1.
    for t in range(nudged + 1):
        assert clean[t].data.tobytes() == shifted[t].data.tobytes()
    assert clean[nudged + 1].data.tobytes() != shifted[nudged + 1].data.tobytes()
