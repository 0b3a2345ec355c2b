import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from tqdm import tqdm

from acvg.errors import CheckpointError, ConfigError, WindowError
from acvg.models.providers import ActionProvider, ActorActions, FixedActions, GroundTruthActions
from acvg.tensor import no_grad
from acvg.train import rollout_batch
from acvg.utils.checkpoint import Checkpoint
from acvg.utils.config import DT2_EVAL_FRAMES, NOISE_SIGMA
from acvg.utils.dataset import ClipBatch, SequenceRecord, build_clip_batch, prepare_clips, valid_offsets
from acvg.utils.metrics import action_l2_curve, frame_l1, psnr, ssim
from acvg.utils.storage import write_ppm
from acvg.utils.utils import rng_for, seed_sequence, timer

ACTION_MODES = ("actor", "gt", "fixed")
WINDOW_KEY, NOISE_KEY = 0, 1
METRICS = ("psnr", "ssim", "l1", "action_l2")
METRIC_COLUMNS = ("t",) + tuple(f"{m}_{s}" for m in METRICS for s in ("mean", "std")) + ("count",)


@dataclass
class MetricRow:
    t: int
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    l1_mean: float
    l1_std: float
    action_l2_mean: float
    action_l2_std: float
    count: int


def write_metrics_csv(rows: Sequence[MetricRow], path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow([row.t] + [repr(float(getattr(row, c))) for c in METRIC_COLUMNS[1:-1]] + [row.count])


def read_metrics_csv(path: str) -> list[MetricRow]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return [
            MetricRow(
                t=int(record["t"]),
                count=int(record["count"]),
                **{c: float(record[c]) for c in METRIC_COLUMNS[1:-1]},
            )
            for record in csv.DictReader(f)
        ]


@dataclass
class WindowResult:
    psnr: np.ndarray  # (T,)
    ssim: np.ndarray
    l1: np.ndarray
    action_l2: np.ndarray
    frames: np.ndarray  # (T, H, W, C) predictions
    actions: np.ndarray  # (T, m) actions applied at steps 1..T


def evaluation_windows(clips: Sequence[SequenceRecord], history: int, horizon: int, seed: int) -> list[ClipBatch]:
    """One window per clip at a seed-chosen offset."""
    rng = rng_for(seed, WINDOW_KEY)
    windows = []
    for clip in clips:
        count = valid_offsets(clip, history, horizon)
        if count == 0:
            raise WindowError(f"clip {clip.name!r} of {clip.length} frames cannot hold {history}+{horizon} frames")
        windows.append(build_clip_batch(clip, history, horizon, int(rng.integers(count))))
    return windows


def make_provider(
    action_mode: str,
    ckpt: Checkpoint,
    batch: ClipBatch,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> ActionProvider:
    if action_mode == "actor":
        return ActorActions(ckpt.actor, batch.past_actions, noise_sigma, rng)
    if action_mode == "gt":
        return GroundTruthActions(batch.past_actions, batch.future_actions, noise_sigma, rng)
    if action_mode == "fixed":
        return FixedActions(batch.past_actions, noise_sigma, rng)
    raise ConfigError(f"action mode must be one of {ACTION_MODES}, got {action_mode!r}")


def evaluate_window(
    ckpt: Checkpoint, batch: ClipBatch, action_mode: str, noise_sigma: float = 0.0, noise_seed: Optional[np.random.SeedSequence] = None
) -> WindowResult:
    horizon = batch.horizon
    with no_grad():
        rng = np.random.default_rng(noise_seed) if noise_sigma > 0 else None
        provider = make_provider(action_mode, ckpt, batch, noise_sigma, rng)
        rollout = rollout_batch(ckpt, batch, provider)
        if isinstance(provider, ActorActions):
            trace = provider.predictions
        else:
            provider.action(horizon)
            trace = provider.history[1 : horizon + 1]

    frames = np.stack([f.data[0].transpose(1, 2, 0) for f in rollout.frames])
    targets = batch.future_frames[0].transpose(0, 2, 3, 1)
    actions = np.stack([a.data[0] for a in trace]).astype(np.float64)
    return WindowResult(
        psnr=np.array([psnr(targets[t], frames[t]) for t in range(horizon)]),
        ssim=np.array([ssim(targets[t], frames[t]) for t in range(horizon)]),
        l1=np.array([frame_l1(targets[t], frames[t]) for t in range(horizon)]),
        action_l2=action_l2_curve(batch.future_actions[0], actions),
        frames=frames,
        actions=actions,
    )


def aggregate(results: Sequence[WindowResult]) -> list[MetricRow]:
    stacked = {m: np.stack([getattr(r, m) for r in results]) for m in METRICS}
    horizon = stacked["psnr"].shape[1]
    rows = []
    for t in range(horizon):
        values = {}
        for m in METRICS:
            values[f"{m}_mean"] = float(np.mean(stacked[m][:, t]))
            values[f"{m}_std"] = float(np.std(stacked[m][:, t]))
        rows.append(MetricRow(t=t + 1, count=len(results), **values))
    return rows


def dump_window_frames(directory: str, index: int, batch: ClipBatch, result: WindowResult) -> None:
    window_dir = os.path.join(directory, f"window_{index:04d}")
    os.makedirs(window_dir, exist_ok=True)
    for t, frame in enumerate(result.frames, start=1):
        write_ppm(os.path.join(window_dir, f"pred_{t:03d}.ppm"), frame)
        write_ppm(os.path.join(window_dir, f"true_{t:03d}.ppm"), batch.future_frames[0, t - 1].transpose(1, 2, 0))


@timer(logger)
def evaluate(
    ckpt: Checkpoint,
    records: Sequence[SequenceRecord],
    history: int = 5,
    horizon: int = 20,
    action_mode: str = "actor",
    seed: int = 0,
    noise_sigma: float = 0.0,
    dt_factor: int = 1,
    clip_len: int = 50,
    gap: int = 10,
    num_workers: int = 0,
    dump_frames: Optional[str] = None,
) -> list[MetricRow]:
    if action_mode not in ACTION_MODES:
        raise ConfigError(f"action mode must be one of {ACTION_MODES}, got {action_mode!r}")
    clips = prepare_clips(records, clip_len, gap, history, horizon, dt_factor)
    windows = evaluation_windows(clips, history, horizon, seed)
    ckpt.actor.eval()

    def run(index: int) -> WindowResult:
        return evaluate_window(ckpt, windows[index], action_mode, noise_sigma, seed_sequence(seed, NOISE_KEY, index))

    indices = range(len(windows))
    if num_workers > 0:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            results = list(tqdm(pool.map(run, indices), total=len(windows), desc="eval"))
    else:
        results = [run(i) for i in tqdm(indices, desc="eval")]

    if dump_frames is not None:
        for i, (batch, result) in enumerate(zip(windows, results)):
            dump_window_frames(dump_frames, i, batch, result)
        logger.info(f"Dumped predicted frames of {len(results)} windows to {dump_frames}.")

    rows = aggregate(results)
    logger.info(
        f"Evaluated {len(results)} windows ({action_mode}, dt x{dt_factor}, sigma {noise_sigma}): "
        f"mean PSNR {np.mean([r.psnr_mean for r in rows]):.3f} dB"
    )
    return rows


# Ablations --------------------------------------------------------------------------


@dataclass(frozen=True)
class AblationRun:
    mode: str
    variant: str  # "acvg" or "fa"
    action_mode: str
    dt_factor: int = 1
    noise_sigma: float = 0.0

    @property
    def key(self) -> str:
        return f"{self.mode}_{self.variant}"


ABLATION_RUNS = {
    "full": (AblationRun("full", "acvg", "actor"),),
    "fixed": (AblationRun("fixed", "fa", "fixed"),),
    "dt2": (AblationRun("dt2", "acvg", "actor", dt_factor=2), AblationRun("dt2", "fa", "fixed", dt_factor=2)),
    "noise": (
        AblationRun("noise", "acvg", "actor", noise_sigma=NOISE_SIGMA),
        AblationRun("noise", "fa", "fixed", noise_sigma=NOISE_SIGMA),
    ),
}


@dataclass
class AblationReport:
    runs: list[AblationRun]
    seeds: list[int]
    results: dict[str, dict[int, list[MetricRow]]]

    def average(self, key: str) -> list[MetricRow]:
        per_seed = list(self.results[key].values())
        rows = []
        for t in range(len(per_seed[0])):
            at_t = [seed_rows[t] for seed_rows in per_seed]
            values = {c: float(np.mean([getattr(r, c) for r in at_t])) for c in METRIC_COLUMNS[1:-1]}
            rows.append(MetricRow(t=at_t[0].t, count=sum(r.count for r in at_t), **values))
        return rows

    def summary(self) -> list[tuple[str, str, str, float]]:
        table = []
        for run in self.runs:
            rows = self.average(run.key)
            for metric in METRICS:
                value = float(np.mean([getattr(r, f"{metric}_mean") for r in rows]))
                table.append((run.mode, run.variant, metric, value))
        return table


def run_ablation(
    checkpoints: dict[str, Optional[Checkpoint]],
    records: Sequence[SequenceRecord],
    modes: Sequence[str],
    seeds: Sequence[int],
    history: int = 5,
    horizon: int = 20,
    dt2_horizon: int = DT2_EVAL_FRAMES,
    clip_len: int = 50,
    gap: int = 10,
    num_workers: int = 0,
) -> AblationReport:
    runs = []
    for mode in modes:
        if mode not in ABLATION_RUNS:
            raise ConfigError(f"unknown ablation mode {mode!r}; choose from {tuple(ABLATION_RUNS)}")
        for run in ABLATION_RUNS[mode]:
            if checkpoints.get(run.variant) is None:
                raise CheckpointError(f"ablation mode {mode!r} needs the {run.variant} checkpoint")
            runs.append(run)

    results: dict[str, dict[int, list[MetricRow]]] = {}
    for run in runs:
        results[run.key] = {}
        for seed in seeds:
            results[run.key][seed] = evaluate(
                checkpoints[run.variant],
                records,
                history=history,
                horizon=dt2_horizon if run.dt_factor > 1 else horizon,
                action_mode=run.action_mode,
                seed=seed,
                noise_sigma=run.noise_sigma,
                dt_factor=run.dt_factor,
                clip_len=clip_len,
                gap=gap,
                num_workers=num_workers,
            )
    return AblationReport(runs=runs, seeds=list(seeds), results=results)


def write_ablation(report: AblationReport, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for run in report.runs:
        for seed, rows in report.results[run.key].items():
            write_metrics_csv(rows, os.path.join(out_dir, f"seed_{seed}", f"{run.key}.csv"))
        write_metrics_csv(report.average(run.key), os.path.join(out_dir, "average", f"{run.key}.csv"))
    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("mode", "variant", "metric", "value"))
        for mode, variant, metric, value in report.summary():
            writer.writerow((mode, variant, metric, repr(value)))
    logger.info(f"Wrote ablation results for {len(report.runs)} runs x {len(report.seeds)} seeds to {out_dir}.")

