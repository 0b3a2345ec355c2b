import numpy as np
import pytest

from acvg.errors import DataError, InsufficientHistoryError, SequenceLengthError, ShapeError, WindowError
from acvg.utils.dataset import (
    ActionNormalizer,
    SequenceRecord,
    build_clip_batch,
    collate,
    compute_flow,
    make_clips,
    prepare_clips,
    subsample_dt,
    valid_offsets,
)


def make_record(length: int, name: str = "seq", seed: int = 0) -> SequenceRecord:
    rng = np.random.default_rng(seed)
    actions = np.stack([rng.uniform(0.0, 0.1, length), rng.uniform(-1.8, 1.8, length)], axis=1)
    return SequenceRecord(frames=rng.random((length, 4, 4, 1)), actions_raw=actions, name=name)


@pytest.mark.parametrize(
    "raw, expected",
    [
        ((0.0, -1.8), (-1.0, -1.0)),
        ((0.1, 1.8), (1.0, 1.0)),
        ((0.05, 0.0), (0.0, 0.0)),
        ((0.2, -3.0), (1.0, -1.0)),
    ],
)
def test_normalize(raw: tuple, expected: tuple) -> None:
    np.testing.assert_allclose(ActionNormalizer().normalize(np.array([raw])), [expected], atol=1e-12)


def test_denormalize_inverts_normalize() -> None:
    normalizer = ActionNormalizer()
    raw = np.array([[0.03, 0.7], [0.09, -1.2]])
    np.testing.assert_allclose(normalizer.denormalize(normalizer.normalize(raw)), raw)


def test_record_validation() -> None:
    with pytest.raises(SequenceLengthError):
        make_record(1)
    with pytest.raises(ShapeError):
        SequenceRecord(frames=np.zeros((3, 4, 4, 1)), actions_raw=np.zeros((2, 2)))
    with pytest.raises(DataError):
        SequenceRecord(frames=np.full((3, 4, 4, 1), 1.5), actions_raw=np.zeros((3, 2)))


def test_flow_identities() -> None:
    record = make_record(6)
    flows = record.flows()
    assert np.array_equal(flows[0], np.zeros_like(flows[0]))
    np.testing.assert_allclose(record.frames[:-1] + flows[1:], record.frames[1:], atol=1e-6)
    np.testing.assert_allclose(compute_flow(record.frames[3], record.frames[2]), flows[3])


def test_make_clips_uses_gaps() -> None:
    clips = make_clips(make_record(130), clip_len=50, gap=10)
    assert [clip.name for clip in clips] == ["seq@0", "seq@60"]
    assert all(clip.length == 50 for clip in clips)
    assert np.array_equal(clips[1].frames[0], make_record(130).frames[60])


def test_short_sequence_yields_no_clips() -> None:
    assert make_clips(make_record(30), clip_len=50) == []


def test_subsample_dt() -> None:
    clip = subsample_dt(make_record(25), 2)
    assert clip.length == 13
    assert clip.dt == pytest.approx(0.2)
    assert clip.name == "seq/dt2"
    with pytest.raises(SequenceLengthError):
        subsample_dt(make_record(2), 2)


def test_valid_offsets() -> None:
    assert valid_offsets(make_record(50), 5, 10) == 36
    assert valid_offsets(make_record(10), 5, 10) == 0


def test_build_clip_batch() -> None:
    record = make_record(20)
    batch = build_clip_batch(record, history=5, horizon=10, offset=3)
    assert batch.past_frames.shape == (1, 5, 1, 4, 4)
    assert batch.future_frames.shape == (1, 10, 1, 4, 4)
    assert batch.past_actions.shape == (1, 5, 2)
    assert (batch.history, batch.horizon, batch.batch_size) == (5, 10, 1)
    # The first conditioning flow is zero; the first future flow is x_1 - x_0.
    assert np.all(batch.past_flows[0, 0] == 0)
    np.testing.assert_allclose(
        batch.future_flows[0, 0], batch.future_frames[0, 0] - batch.past_frames[0, -1], atol=1e-6
    )
    np.testing.assert_array_equal(batch.past_frames[0, 0, 0], record.frames[3, :, :, 0])
    assert np.all(np.abs(batch.future_actions) <= 1.0)


def test_build_clip_batch_errors() -> None:
    record = make_record(12)
    with pytest.raises(InsufficientHistoryError):
        build_clip_batch(record, history=1, horizon=5)
    with pytest.raises(WindowError):
        build_clip_batch(record, history=5, horizon=10)
    with pytest.raises(WindowError):
        build_clip_batch(record, history=5, horizon=5, offset=3)


def test_collate() -> None:
    records = [make_record(15, name=f"s{i}", seed=i) for i in range(3)]
    batch = collate([build_clip_batch(r, 5, 10) for r in records])
    assert batch.batch_size == 3
    assert batch.names == ["s0+0", "s1+0", "s2+0"]
    with pytest.raises(DataError):
        collate([])


def test_prepare_clips() -> None:
    records = [make_record(110, name="a"), make_record(60, name="b", seed=1)]
    clips = prepare_clips(records, clip_len=50, gap=10, history=5, horizon=10)
    assert [clip.name for clip in clips] == ["a@0", "a@60", "b@0"]
    halved = prepare_clips(records, 50, 10, 5, 15, dt_factor=2)
    assert all(clip.length == 25 for clip in halved)
    with pytest.raises(WindowError):
        prepare_clips(records, 50, 10, 5, 21, dt_factor=2)
    with pytest.raises(DataError):
        prepare_clips([make_record(20)], 50, 10, 5, 10)


@pytest.mark.parametrize("length, names", [(50, ["seq@0"]), (49, []), (110, ["seq@0", "seq@60"])])
def test_clip_counts(length: int, names: list) -> None:
    assert [clip.name for clip in make_clips(make_record(length))] == names


def test_subsample_keeps_even_indices() -> None:
    record = make_record(30)
    halved = subsample_dt(record, 2)
    assert halved.length == 15
    np.testing.assert_array_equal(halved.frames, record.frames[0:29:2])
    assert subsample_dt(record, 1).frames.tobytes() == record.frames.tobytes()
