import struct

import numpy as np
import pytest

from acvg.errors import CheckpointCorruptionError, CheckpointError, CheckpointFormatError
from acvg.utils.checkpoint import (
    MAGIC,
    create_checkpoint,
    from_bytes,
    load_checkpoint,
    save_checkpoint,
    to_bytes,
)
from acvg.utils.config import ModelConfig


@pytest.fixture
def blob(tiny_model: ModelConfig) -> bytes:
    return to_bytes(create_checkpoint(tiny_model, seed=5))


def test_stores_are_in_fixed_order(tiny_model: ModelConfig) -> None:
    ckpt = create_checkpoint(tiny_model)
    assert [network for network, _ in ckpt.stores()] == ["actor", "discriminator", "generator"]


def test_save_and_load_is_bitwise(tmp_path, tiny_model: ModelConfig) -> None:
    ckpt = create_checkpoint(tiny_model, seed=5)
    name = ckpt.actor.params.names()[0]
    ckpt.actor.params.first_moment[name] = np.ones_like(ckpt.actor.params[name].data)
    ckpt.actor.params.steps[name] = 3
    ckpt.global_step = 7
    ckpt.completed_phases = ["generator"]

    path = str(tmp_path / "model.ckpt")
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    assert loaded.config == tiny_model
    assert loaded.global_step == 7
    assert loaded.completed_phases == ["generator"]
    assert loaded.actor.params.steps[name] == 3
    assert np.all(loaded.actor.params.first_moment[name] == 1.0)
    for (_, original), (_, restored) in zip(ckpt.stores(), loaded.stores()):
        assert original.snapshot() == restored.snapshot()
    assert to_bytes(loaded) == to_bytes(ckpt)


def test_seed_changes_weights(tiny_model: ModelConfig) -> None:
    a, b = create_checkpoint(tiny_model, 0), create_checkpoint(tiny_model, 1)
    assert a.generator.params.snapshot() != b.generator.params.snapshot()


def test_bad_magic(blob: bytes) -> None:
    with pytest.raises(CheckpointFormatError):
        from_bytes(b"NOTACKPT" + blob[len(MAGIC) :])


def test_unknown_version(blob: bytes) -> None:
    with pytest.raises(CheckpointFormatError):
        from_bytes(MAGIC + struct.pack("<I", 99) + blob[len(MAGIC) + 4 :])


@pytest.mark.parametrize("cut", [1, 100, 4096])
def test_truncation_is_detected(blob: bytes, cut: int) -> None:
    with pytest.raises(CheckpointCorruptionError):
        from_bytes(blob[:-cut])


def test_trailing_bytes_are_detected(blob: bytes) -> None:
    with pytest.raises(CheckpointCorruptionError):
        from_bytes(blob + b"\x00")


def test_missing_file(tmp_path) -> None:
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / "absent.ckpt"))


def test_require_phases(tiny_model: ModelConfig) -> None:
    ckpt = create_checkpoint(tiny_model)
    ckpt.completed_phases = ["generator"]
    ckpt.require_phases("generator")
    with pytest.raises(CheckpointError, match="actor"):
        ckpt.require_phases("generator", "actor")
