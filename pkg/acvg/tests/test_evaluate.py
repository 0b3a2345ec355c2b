import csv
import os

import numpy as np
import pytest

from acvg.environment.world import simulate_sequence
from acvg.errors import CheckpointError, ConfigError, WindowError
from acvg.evaluate import (
    evaluate,
    evaluation_windows,
    read_metrics_csv,
    run_ablation,
    write_ablation,
    write_metrics_csv,
)
from acvg.utils.checkpoint import create_checkpoint, from_bytes, to_bytes
from acvg.utils.config import ModelConfig
from acvg.utils.dataset import prepare_clips

HISTORY, HORIZON = 2, 4
WINDOW = dict(history=HISTORY, horizon=HORIZON, clip_len=8, gap=0)


@pytest.fixture
def ckpt(tiny_model: ModelConfig):
    return create_checkpoint(tiny_model, seed=0)


@pytest.mark.parametrize("action_mode", ["actor", "gt", "fixed"])
def test_one_row_per_timestep(ckpt, tiny_records, action_mode: str) -> None:
    rows = evaluate(ckpt, tiny_records, action_mode=action_mode, **WINDOW)
    assert [row.t for row in rows] == list(range(1, HORIZON + 1))
    # Three 16-frame records give two 8-frame clips each.
    assert all(row.count == 6 for row in rows)
    assert all(0 < row.ssim_mean <= 1 for row in rows)
    assert all(row.psnr_mean > 0 for row in rows)


def test_windows_are_seeded(tiny_records) -> None:
    clips = prepare_clips(tiny_records, 8, 0, HISTORY, HORIZON)
    a = [w.names for w in evaluation_windows(clips, HISTORY, HORIZON, seed=0)]
    b = [w.names for w in evaluation_windows(clips, HISTORY, HORIZON, seed=0)]
    assert a == b
    assert len(a) == len(clips)


def test_horizon_too_long(ckpt, tiny_records) -> None:
    with pytest.raises(WindowError):
        evaluate(ckpt, tiny_records, history=HISTORY, horizon=20, clip_len=8, gap=0)


def test_unknown_action_mode(ckpt, tiny_records) -> None:
    with pytest.raises(ConfigError):
        evaluate(ckpt, tiny_records, action_mode="oracle", **WINDOW)


def test_reloaded_checkpoint_evaluates_identically(ckpt, tiny_records) -> None:
    before = evaluate(ckpt, tiny_records, **WINDOW)
    after = evaluate(from_bytes(to_bytes(ckpt)), tiny_records, **WINDOW)
    assert before == after


def test_threads_match_serial(ckpt, tiny_records) -> None:
    serial = evaluate(ckpt, tiny_records, action_mode="gt", noise_sigma=0.2, **WINDOW)
    threaded = evaluate(ckpt, tiny_records, action_mode="gt", noise_sigma=0.2, num_workers=3, **WINDOW)
    assert serial == threaded


def test_noise_changes_rollouts(ckpt, tiny_records) -> None:
    clean = evaluate(ckpt, tiny_records, action_mode="gt", **WINDOW)
    noisy = evaluate(ckpt, tiny_records, action_mode="gt", noise_sigma=0.2, **WINDOW)
    assert clean != noisy


def test_fixed_mode_scores_the_held_action(ckpt, tiny_records) -> None:
    rows = evaluate(ckpt, tiny_records, action_mode="fixed", **WINDOW)
    # Held a_0 against the recorded commands, which keep changing.
    assert any(row.action_l2_mean > 0 for row in rows)


def test_dump_frames(ckpt, tiny_records, tmp_path) -> None:
    evaluate(ckpt, tiny_records, dump_frames=str(tmp_path), **WINDOW)
    window_dir = tmp_path / "window_0000"
    assert sorted(os.listdir(window_dir)) == sorted(
        [f"pred_{t:03d}.ppm" for t in range(1, HORIZON + 1)] + [f"true_{t:03d}.ppm" for t in range(1, HORIZON + 1)]
    )


def test_metrics_csv(ckpt, tiny_records, tmp_path) -> None:
    rows = evaluate(ckpt, tiny_records, **WINDOW)
    path = str(tmp_path / "metrics.csv")
    write_metrics_csv(rows, path)
    with open(path, encoding="utf-8") as f:
        header = next(csv.reader(f))
    assert header[0] == "t" and header[-1] == "count"
    assert read_metrics_csv(path) == rows


def test_ablation_outputs(ckpt, tiny_records, tmp_path) -> None:
    report = run_ablation(
        {"acvg": ckpt, "fa": ckpt},
        tiny_records,
        modes=["full", "fixed", "dt2"],
        seeds=[0, 1],
        history=HISTORY,
        horizon=HORIZON,
        dt2_horizon=2,
        clip_len=8,
        gap=0,
    )
    assert [run.key for run in report.runs] == ["full_acvg", "fixed_fa", "dt2_acvg", "dt2_fa"]
    assert len(report.average("dt2_fa")) == 2
    assert report.average("full_acvg")[0].count == 12

    write_ablation(report, str(tmp_path))
    for seed in (0, 1):
        assert os.path.exists(tmp_path / f"seed_{seed}" / "full_acvg.csv")
    assert len(read_metrics_csv(str(tmp_path / "average" / "dt2_acvg.csv"))) == 2
    with open(tmp_path / "summary.csv", encoding="utf-8") as f:
        summary = list(csv.DictReader(f))
    assert len(summary) == 4 * 4
    assert {row["variant"] for row in summary} == {"acvg", "fa"}


def test_seed_average(ckpt, tiny_records) -> None:
    report = run_ablation({"acvg": ckpt}, tiny_records, ["full"], [0, 1], **WINDOW)
    per_seed = [report.results["full_acvg"][s] for s in (0, 1)]
    averaged = report.average("full_acvg")
    for t in range(HORIZON):
        assert averaged[t].psnr_mean == pytest.approx(np.mean([rows[t].psnr_mean for rows in per_seed]))


def test_dt2_protocol_horizon(ckpt, tiny_world) -> None:
    record = simulate_sequence(tiny_world, 0, 50)
    report = run_ablation({"acvg": ckpt, "fa": ckpt}, [record], ["dt2"], [0], history=5)
    assert len(report.average("dt2_acvg")) == 15


def test_ablation_needs_both_checkpoints(ckpt, tiny_records) -> None:
    with pytest.raises(CheckpointError):
        run_ablation({"acvg": ckpt, "fa": None}, tiny_records, ["fixed"], [0], **WINDOW)
    with pytest.raises(ConfigError):
        run_ablation({"acvg": ckpt, "fa": ckpt}, tiny_records, ["sideways"], [0], **WINDOW)
