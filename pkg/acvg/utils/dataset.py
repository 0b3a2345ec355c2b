from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from acvg.errors import DataError, InsufficientHistoryError, SequenceLengthError, ShapeError, WindowError

ActionRanges = tuple[tuple[float, float], ...]
DEFAULT_RANGES: ActionRanges = ((0.0, 0.1), (-1.8, 1.8))


@dataclass
class SequenceRecord:
    """One recorded run: frames (T, H, W, C) in [0, 1] and raw actions (T, m).

    `actions_raw[t]` is the command issued after observing `frames[t]`.
    """

    frames: np.ndarray
    actions_raw: np.ndarray
    dt: float = 0.1
    ranges: ActionRanges = DEFAULT_RANGES
    name: str = ""

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float32)
        self.actions_raw = np.asarray(self.actions_raw, dtype=np.float64)
        self.ranges = tuple(tuple(float(v) for v in r) for r in self.ranges)
        if self.frames.ndim != 4:
            raise ShapeError(f"frames must be (T, H, W, C), got {self.frames.shape}")
        if self.actions_raw.ndim != 2 or self.actions_raw.shape[0] != self.frames.shape[0]:
            raise ShapeError(
                f"actions {self.actions_raw.shape} do not line up with {self.frames.shape[0]} frames"
            )
        if self.actions_raw.shape[1] != len(self.ranges):
            raise ShapeError(f"{self.actions_raw.shape[1]} action components but {len(self.ranges)} ranges")
        if self.length < 2:
            raise SequenceLengthError(f"a sequence needs at least 2 frames, got {self.length}")
        if self.frames.min() < 0.0 or self.frames.max() > 1.0:
            raise DataError(f"frame values of {self.name or 'sequence'} fall outside [0, 1]")

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.frames.shape[1:]

    def flows(self) -> np.ndarray:
        """Frame differences; the first flow is defined as zero."""
        return np.concatenate([np.zeros_like(self.frames[:1]), np.diff(self.frames, axis=0)])


@dataclass(frozen=True)
class ActionNormalizer:
    ranges: ActionRanges = DEFAULT_RANGES

    def _bounds(self) -> tuple[np.ndarray, np.ndarray]:
        low = np.array([r[0] for r in self.ranges], dtype=np.float64)
        high = np.array([r[1] for r in self.ranges], dtype=np.float64)
        return low, high

    def normalize(self, actions_raw: np.ndarray) -> np.ndarray:
        """Affine map of every component range onto [-1, 1]."""
        low, high = self._bounds()
        actions_raw = np.asarray(actions_raw, dtype=np.float64)
        clipped = np.clip(actions_raw, low, high)
        if not np.array_equal(clipped, actions_raw):
            logger.warning(f"Clamped {int(np.sum(clipped != actions_raw))} out-of-range action values.")
        return 2.0 * (clipped - low) / (high - low) - 1.0

    def denormalize(self, actions: np.ndarray) -> np.ndarray:
        low, high = self._bounds()
        return low + (np.asarray(actions, dtype=np.float64) + 1.0) * (high - low) / 2.0


def compute_flow(frame: np.ndarray, previous: np.ndarray) -> np.ndarray:
    if frame.shape != previous.shape:
        raise ShapeError(f"cannot difference frames of shape {frame.shape} and {previous.shape}")
    return frame - previous


def make_clips(record: SequenceRecord, clip_len: int = 50, gap: int = 10) -> list[SequenceRecord]:
    """Non-overlapping clips of `clip_len` frames separated by `gap` discarded frames."""
    if clip_len < 2 or gap < 0:
        raise ValueError(f"invalid clip length {clip_len} or gap {gap}")
    clips = []
    start = 0
    while start + clip_len <= record.length:
        stop = start + clip_len
        clips.append(
            SequenceRecord(
                frames=record.frames[start:stop],
                actions_raw=record.actions_raw[start:stop],
                dt=record.dt,
                ranges=record.ranges,
                name=f"{record.name}@{start}",
            )
        )
        start = stop + gap
    return clips


def subsample_dt(clip: SequenceRecord, factor: int = 2) -> SequenceRecord:
    """Keep every `factor`-th frame and action; the interval grows accordingly."""
    if factor < 1:
        raise ValueError(f"subsampling factor must be at least 1, got {factor}")
    frames = clip.frames[::factor]
    if frames.shape[0] < 2:
        raise SequenceLengthError(f"subsampling {clip.length} frames by {factor} leaves {frames.shape[0]}")
    return SequenceRecord(
        frames=frames,
        actions_raw=clip.actions_raw[::factor],
        dt=clip.dt * factor,
        ranges=clip.ranges,
        name=f"{clip.name}/dt{factor}",
    )


@dataclass
class ClipBatch:
    """Model-ready tensors in NTCHW layout; actions are normalized.

    `past_flows[:, 0]` is zero. `future_flows[:, 0]` is x_1 - x_0.
    """

    past_frames: np.ndarray  # (N, n, C, H, W)
    past_flows: np.ndarray  # (N, n, C, H, W)
    past_actions: np.ndarray  # (N, n, m)
    future_frames: np.ndarray  # (N, T, C, H, W)
    future_flows: np.ndarray  # (N, T, C, H, W)
    future_actions: np.ndarray  # (N, T, m)
    names: list[str] = field(default_factory=list)

    @property
    def batch_size(self) -> int:
        return self.past_frames.shape[0]

    @property
    def history(self) -> int:
        return self.past_frames.shape[1]

    @property
    def horizon(self) -> int:
        return self.future_frames.shape[1]


def valid_offsets(clip: SequenceRecord, history: int, horizon: int) -> int:
    """Number of window starts that fit `history + horizon` frames."""
    return max(clip.length - history - horizon + 1, 0)


def build_clip_batch(
    clip: SequenceRecord,
    history: int = 5,
    horizon: int = 10,
    offset: int = 0,
    normalizer: Optional[ActionNormalizer] = None,
) -> ClipBatch:
    if history < 2:
        raise InsufficientHistoryError(f"at least 2 past frames are needed, got {history}")
    if horizon < 1:
        raise WindowError(f"the horizon must be at least 1, got {horizon}")
    if offset < 0 or offset + history + horizon > clip.length:
        raise WindowError(
            f"a window of {history}+{horizon} frames at offset {offset} does not fit "
            f"clip {clip.name!r} of {clip.length} frames"
        )
    normalizer = normalizer or ActionNormalizer(clip.ranges)
    window = clip.frames[offset : offset + history + horizon].transpose(0, 3, 1, 2)
    flows = np.concatenate([np.zeros_like(window[:1]), np.diff(window, axis=0)])
    actions = normalizer.normalize(clip.actions_raw[offset : offset + history + horizon]).astype(np.float32)
    return ClipBatch(
        past_frames=window[None, :history].copy(),
        past_flows=flows[None, :history].copy(),
        past_actions=actions[None, :history].copy(),
        future_frames=window[None, history:].copy(),
        future_flows=flows[None, history:].copy(),
        future_actions=actions[None, history:].copy(),
        names=[f"{clip.name}+{offset}"],
    )


def collate(batches: Sequence[ClipBatch]) -> ClipBatch:
    if not batches:
        raise DataError("cannot collate an empty list of batches")
    return ClipBatch(
        past_frames=np.concatenate([b.past_frames for b in batches]),
        past_flows=np.concatenate([b.past_flows for b in batches]),
        past_actions=np.concatenate([b.past_actions for b in batches]),
        future_frames=np.concatenate([b.future_frames for b in batches]),
        future_flows=np.concatenate([b.future_flows for b in batches]),
        future_actions=np.concatenate([b.future_actions for b in batches]),
        names=[name for b in batches for name in b.names],
    )


def prepare_clips(
    records: Sequence[SequenceRecord], clip_len: int, gap: int, history: int, horizon: int, dt_factor: int = 1
) -> list[SequenceRecord]:
    clips = [clip for record in records for clip in make_clips(record, clip_len, gap)]
    if dt_factor > 1:
        clips = [subsample_dt(clip, dt_factor) for clip in clips]
    if not clips:
        raise DataError(f"no sequence is long enough for a {clip_len}-frame clip")
    short = [clip.name for clip in clips if clip.length < history + horizon]
    if short:
        raise WindowError(
            f"{len(short)} clips are shorter than {history}+{horizon} frames (first: {short[0]!r})"
        )
    return clips
