"""On-disk dataset layout.

    DIR/manifest.txt          one `name split` line per sequence
    DIR/seq_00000/frames.bin  "ACVD" + u32 version + u32 T, H, W, C + float32 LE frames
    DIR/seq_00000/actions.txt one line of raw action components per frame
    DIR/seq_00000/meta.txt    `dt = ...` and `ranges = lo,hi;lo,hi`

External data is ingested from `seq_*/frame_*.ppm` plus `actions.txt`.
"""
import glob
import os
import struct
from dataclasses import replace
from typing import Iterable, Optional, Sequence

import numpy as np
from loguru import logger
from PIL import Image

from acvg.errors import DataError, IngestionError
from acvg.utils.dataset import DEFAULT_RANGES, ActionRanges, SequenceRecord
from acvg.utils.utils import read_lines, sequence_name

FRAMES_MAGIC = b"ACVD"
FRAMES_VERSION = 1
TRAIN_SHARE, TEST_SHARE = 20, 5
SPLITS = ("train", "test", "all")


def _write_meta(path: str, dt: float, ranges: ActionRanges) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"dt = {dt!r}\n")
        f.write("ranges = " + ";".join(f"{lo!r},{hi!r}" for lo, hi in ranges) + "\n")


def _read_meta(path: str) -> tuple[float, ActionRanges]:
    dt, ranges = 0.1, DEFAULT_RANGES
    if not os.path.exists(path):
        return dt, ranges
    for lineno, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        key, _, value = (part.strip() for part in line.partition("="))
        try:
            if key == "dt":
                dt = float(value)
            elif key == "ranges":
                ranges = tuple(
                    tuple(float(v) for v in pair.split(",")) for pair in value.split(";") if pair.strip()
                )
            else:
                raise IngestionError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as e:
            raise IngestionError(f"{path}:{lineno}: cannot parse {line!r}") from e
    return dt, ranges


def _write_actions(path: str, actions: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in actions:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def _read_actions(path: str, expected: int) -> np.ndarray:
    if not os.path.exists(path):
        raise IngestionError(f"{path}: missing action file")
    lines = [line for line in read_lines(path) if line.strip()]
    if len(lines) != expected:
        raise IngestionError(f"{path}: expected {expected} action lines, found {len(lines)}")
    try:
        return np.array([[float(v) for v in line.split()] for line in lines], dtype=np.float64)
    except ValueError as e:
        raise IngestionError(f"{path}: non-numeric action value") from e


def write_frames(path: str, frames: np.ndarray) -> None:
    header = FRAMES_MAGIC + struct.pack("<5I", FRAMES_VERSION, *frames.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_frames(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    header_size = len(FRAMES_MAGIC) + 5 * 4
    if len(blob) < header_size or blob[:4] != FRAMES_MAGIC:
        raise DataError(f"{path}: not a frame file")
    version, *shape = struct.unpack("<5I", blob[4:header_size])
    if version != FRAMES_VERSION:
        raise DataError(f"{path}: unsupported frame file version {version}")
    count = int(np.prod(shape))
    if len(blob) != header_size + 4 * count:
        raise DataError(f"{path}: expected {count} values, file holds {(len(blob) - header_size) // 4}")
    return np.frombuffer(blob, dtype="<f4", offset=header_size).reshape(shape).astype(np.float32)


def save_sequence(directory: str, record: SequenceRecord) -> str:
    """Write one sequence into DIR/<record.name>; returns that path."""
    seq_dir = os.path.join(directory, record.name)
    os.makedirs(seq_dir, exist_ok=True)
    write_frames(os.path.join(seq_dir, "frames.bin"), record.frames)
    _write_actions(os.path.join(seq_dir, "actions.txt"), record.actions_raw)
    _write_meta(os.path.join(seq_dir, "meta.txt"), record.dt, record.ranges)
    return seq_dir


def load_sequence(seq_dir: str) -> SequenceRecord:
    frames = read_frames(os.path.join(seq_dir, "frames.bin"))
    actions = _read_actions(os.path.join(seq_dir, "actions.txt"), frames.shape[0])
    dt, ranges = _read_meta(os.path.join(seq_dir, "meta.txt"))
    return SequenceRecord(frames=frames, actions_raw=actions, dt=dt, ranges=ranges, name=sequence_name(seq_dir))


def split_names(names: Sequence[str]) -> dict[str, str]:
    """Deterministic 20:5 train/test assignment in name order."""
    period = TRAIN_SHARE + TEST_SHARE
    return {name: "train" if i % period < TRAIN_SHARE else "test" for i, name in enumerate(sorted(names))}


def write_manifest(directory: str, assignment: dict[str, str]) -> None:
    with open(os.path.join(directory, "manifest.txt"), "w", encoding="utf-8") as f:
        for name in sorted(assignment):
            f.write(f"{name} {assignment[name]}\n")


def read_manifest(directory: str) -> dict[str, str]:
    path = os.path.join(directory, "manifest.txt")
    if not os.path.exists(path):
        raise DataError(f"{directory}: no manifest.txt, cannot select a split")
    assignment = {}
    for lineno, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in ("train", "test"):
            raise DataError(f"{path}:{lineno}: expected '<name> train|test', got {line!r}")
        assignment[parts[0]] = parts[1]
    return assignment


def save_dataset(directory: str, records: Iterable[SequenceRecord]) -> None:
    os.makedirs(directory, exist_ok=True)
    names = []
    for i, record in enumerate(records):
        if not record.name:
            record = replace(record, name=f"seq_{i:05d}")
        names.append(os.path.basename(save_sequence(directory, record)))
    write_manifest(directory, split_names(names))
    logger.info(f"Wrote {len(names)} sequences to {directory}.")


def load_dataset(directory: str, split: str = "all") -> list[SequenceRecord]:
    if split not in SPLITS:
        raise DataError(f"split must be one of {SPLITS}, got {split!r}")
    seq_dirs = sorted(d for d in glob.glob(os.path.join(directory, "seq_*")) if os.path.isdir(d))
    if split != "all":
        assignment = read_manifest(directory)
        seq_dirs = [d for d in seq_dirs if assignment.get(sequence_name(d)) == split]
    if not seq_dirs:
        raise DataError(f"{directory}: no sequences for split {split!r}")
    if os.path.exists(os.path.join(seq_dirs[0], "frames.bin")):
        records = [load_sequence(d) for d in seq_dirs]
    else:
        records = [ingest_sequence(d) for d in seq_dirs]
    logger.info(f"Loaded {len(records)} {split} sequences from {directory}.")
    return records


# Portable pixmaps ------------------------------------------------------------------


def write_ppm(path: str, frame: np.ndarray) -> None:
    """(H, W, C) in [0, 1] to a binary P6 file; one channel is replicated."""
    pixels = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    if pixels.shape[-1] == 1:
        pixels = np.repeat(pixels, 3, axis=-1)
    Image.fromarray(pixels).save(path, format="PPM")


def read_ppm(path: str) -> np.ndarray:
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("RGB"), dtype=np.float32)
    except OSError as e:
        raise IngestionError(f"{path}: unreadable image") from e
    return pixels / 255.0


def ingest_sequence(seq_dir: str, dt: Optional[float] = None, ranges: Optional[ActionRanges] = None) -> SequenceRecord:
    frame_paths = sorted(glob.glob(os.path.join(seq_dir, "frame_*.ppm")))
    if len(frame_paths) < 2:
        raise IngestionError(f"{seq_dir}: found {len(frame_paths)} frame_*.ppm files, need at least 2")
    frames = np.stack([read_ppm(p) for p in frame_paths])
    actions = _read_actions(os.path.join(seq_dir, "actions.txt"), len(frame_paths))
    meta_dt, meta_ranges = _read_meta(os.path.join(seq_dir, "meta.txt"))
    return SequenceRecord(
        frames=frames,
        actions_raw=actions,
        dt=dt if dt is not None else meta_dt,
        ranges=ranges if ranges is not None else meta_ranges,
        name=sequence_name(seq_dir),
    )


def ingest_external(directory: str, dt: Optional[float] = None, ranges: Optional[ActionRanges] = None) -> list[SequenceRecord]:
    seq_dirs = sorted(d for d in glob.glob(os.path.join(directory, "seq_*")) if os.path.isdir(d))
    if not seq_dirs:
        raise IngestionError(f"{directory}: no seq_* directories")
    return [ingest_sequence(d, dt, ranges) for d in seq_dirs]


def export_external(directory: str, records: Iterable[SequenceRecord]) -> None:
    """Inverse of `ingest_external`, for sharing sequences with other tools."""
    for record in records:
        seq_dir = os.path.join(directory, record.name)
        os.makedirs(seq_dir, exist_ok=True)
        for t, frame in enumerate(record.frames):
            write_ppm(os.path.join(seq_dir, f"frame_{t:05d}.ppm"), frame)
        _write_actions(os.path.join(seq_dir, "actions.txt"), record.actions_raw)
        _write_meta(os.path.join(seq_dir, "meta.txt"), record.dt, record.ranges)
