"""Binary checkpoints.

Layout (all integers little-endian):

    b"ACVGCKPT" | u32 version
    u32 count | count x entry          parameters
    u32 count | count x entry          Adam moments, named `<param>#m` / `<param>#v`
    u32 count | count x (u16 len, name, u32 step)
    u64 global step
    u32 len | UTF-8 JSON metadata      model config, completed phases, fingerprint

    entry = u16 name length | name | u8 rank | u32 extents[rank] | float32 data
"""
import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from loguru import logger

from acvg.errors import CheckpointCorruptionError, CheckpointError, CheckpointFormatError
from acvg.models.actor import Actor
from acvg.models.discriminator import Discriminator
from acvg.models.generator import Generator
from acvg.tensor import ParamStore
from acvg.utils.config import ModelConfig
from acvg.utils.utils import rng_for

MAGIC = b"ACVGCKPT"
VERSION = 1
NETWORKS = ("actor", "discriminator", "generator")


@dataclass
class Checkpoint:
    config: ModelConfig
    generator: Generator
    actor: Actor
    discriminator: Discriminator
    global_step: int = 0
    completed_phases: list[str] = field(default_factory=list)

    def stores(self) -> Iterator[tuple[str, ParamStore]]:
        for network in NETWORKS:
            yield network, getattr(self, network).params

    def require_phases(self, *phases: str) -> None:
        missing = [p for p in phases if p not in self.completed_phases]
        if missing:
            raise CheckpointError(
                f"checkpoint lacks the {', '.join(missing)} phase(s); completed: {self.completed_phases or 'none'}"
            )

    def fingerprint(self) -> str:
        return hashlib.sha256(self.config.to_json().encode("utf-8")).hexdigest()[:16]


def create_checkpoint(cfg: ModelConfig, seed: int = 0) -> Checkpoint:
    return Checkpoint(
        config=cfg,
        generator=Generator(cfg, rng_for(seed, 0)),
        actor=Actor(cfg, rng_for(seed, 1)),
        discriminator=Discriminator(cfg, rng_for(seed, 2)),
    )


def _pack_entry(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    return (
        struct.pack("<H", len(encoded))
        + encoded
        + struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape)
        + np.ascontiguousarray(array, dtype="<f4").tobytes()
    )


def _pack_table(entries: list[tuple[str, np.ndarray]]) -> bytes:
    return struct.pack("<I", len(entries)) + b"".join(_pack_entry(n, a) for n, a in entries)


def to_bytes(ckpt: Checkpoint) -> bytes:
    params, moments, steps = [], [], []
    for network, store in ckpt.stores():
        for name, param in store.items():
            full = f"{network}.{name}"
            params.append((full, param.data))
            moments.append((f"{full}#m", store.first_moment[name]))
            moments.append((f"{full}#v", store.second_moment[name]))
            steps.append((full, store.steps[name]))

    meta = json.dumps(
        {
            "model": json.loads(ckpt.config.to_json()),
            "completed_phases": list(ckpt.completed_phases),
            "fingerprint": ckpt.fingerprint(),
        },
        sort_keys=True,
    ).encode("utf-8")

    blob = bytearray(MAGIC + struct.pack("<I", VERSION))
    blob += _pack_table(params)
    blob += _pack_table(moments)
    blob += struct.pack("<I", len(steps))
    for name, step in steps:
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded)) + encoded + struct.pack("<I", step)
    blob += struct.pack("<Q", ckpt.global_step)
    blob += struct.pack("<I", len(meta)) + meta
    return bytes(blob)


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as f:
        f.write(to_bytes(ckpt))
    logger.info(f"Saved checkpoint (step {ckpt.global_step}, phases {ckpt.completed_phases}) to {path}.")


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.blob):
            raise CheckpointCorruptionError(
                f"{self.path}: truncated at byte {len(self.blob)}, needed {self.pos + size}"
            )
        chunk = self.blob[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self) -> str:
        (length,) = self.unpack("<H")
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointCorruptionError(f"{self.path}: undecodable entry name") from e

    def table(self) -> dict[str, np.ndarray]:
        (count,) = self.unpack("<I")
        entries = {}
        for _ in range(count):
            name = self.name()
            (rank,) = self.unpack("<B")
            shape = self.unpack(f"<{rank}I")
            size = int(np.prod(shape)) if rank else 1
            entries[name] = np.frombuffer(self.take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
        return entries


def from_bytes(blob: bytes, path: str = "<memory>") -> Checkpoint:
    reader = _Reader(blob, path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic)")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}, expected {VERSION}")

    params = reader.table()
    moments = reader.table()
    (count,) = reader.unpack("<I")
    steps = {}
    for _ in range(count):
        name = reader.name()
        (steps[name],) = reader.unpack("<I")
    (global_step,) = reader.unpack("<Q")
    (meta_len,) = reader.unpack("<I")
    try:
        meta = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointCorruptionError(f"{path}: unreadable metadata") from e
    if reader.pos != len(blob):
        raise CheckpointCorruptionError(f"{path}: {len(blob) - reader.pos} trailing bytes")

    config = ModelConfig.from_json(json.dumps(meta["model"]))
    ckpt = create_checkpoint(config)
    if ckpt.fingerprint() != meta.get("fingerprint"):
        raise CheckpointCorruptionError(f"{path}: configuration fingerprint mismatch")
    for network, store in ckpt.stores():
        for name, param in store.items():
            full = f"{network}.{name}"
            try:
                data, m, v, step = params[full], moments[f"{full}#m"], moments[f"{full}#v"], steps[full]
            except KeyError as e:
                raise CheckpointFormatError(f"{path}: missing entry {e.args[0]!r}") from None
            if data.shape != param.shape:
                raise CheckpointFormatError(f"{path}: {full} has shape {data.shape}, expected {param.shape}")
            param.data = data
            store.first_moment[name] = m
            store.second_moment[name] = v
            store.steps[name] = step
    ckpt.global_step = global_step
    ckpt.completed_phases = list(meta.get("completed_phases", []))
    return ckpt


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint {path} does not exist")
    with open(path, "rb") as f:
        blob = f.read()
    ckpt = from_bytes(blob, path)
    logger.info(f"Loaded checkpoint {path} (step {ckpt.global_step}, phases {ckpt.completed_phases}).")
    return ckpt
