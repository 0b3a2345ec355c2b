import pytest

from acvg.environment.world import simulate_sequence
from acvg.utils.config import ModelConfig, PhaseConfig, WorldConfig
from acvg.utils.dataset import SequenceRecord, prepare_clips
from acvg.utils.utils import seed_sequence

TINY_WIDTHS = dict(
    encoder_channels=(2, 2, 3),
    lstm_channels=2,
    actor_channels=(2, 2),
    actor_dense=4,
    disc_channels=(2, 2, 2, 2),
)


@pytest.fixture
def tiny_model() -> ModelConfig:
    return ModelConfig(channels=1, past_frames=2, future_frames=2, **TINY_WIDTHS)


@pytest.fixture
def tiny_phase(tmp_path) -> PhaseConfig:
    return PhaseConfig(
        n_g=2,
        n_a=2,
        n_dual=2,
        batch_size=1,
        past_frames=2,
        future_frames=2,
        clip_len=6,
        clip_gap=0,
        ckpt_path=str(tmp_path / "ckpts"),
        log_every_n=1,
        **TINY_WIDTHS,
    )


@pytest.fixture(scope="session")
def tiny_world() -> WorldConfig:
    return WorldConfig(texture_size=64, height=32, width=32, channels=1, seed=3)


@pytest.fixture(scope="session")
def tiny_records(tiny_world: WorldConfig) -> list[SequenceRecord]:
    records = []
    for i in range(3):
        record = simulate_sequence(tiny_world, seed_sequence(tiny_world.seed, i), 16)
        record.name = f"seq_{i:05d}"
        records.append(record)
    return records


@pytest.fixture
def tiny_clips(tiny_records: list[SequenceRecord]) -> list[SequenceRecord]:
    return prepare_clips(tiny_records, clip_len=6, gap=0, history=2, horizon=2)
