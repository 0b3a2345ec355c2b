import os

import pytest

from acvg.errors import ConfigError
from acvg.utils.config import DT2_EVAL_FRAMES, ModelConfig, PhaseConfig, WorldConfig, generate_config

TEST_CONFIG = os.path.join(os.path.dirname(__file__), "test_training_config.txt")


def test_generate_config(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    tc = generate_config(TEST_CONFIG)

    assert tc == PhaseConfig(batch_size=8, betas=(0.9, 0.99), n_g=20, actor_normalize=True), tc
    assert os.path.isdir(tmp_path / "ckpts")


def test_missing_file_gives_defaults(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    assert generate_config(str(tmp_path / "absent.txt")) == PhaseConfig()
    assert generate_config(None) == PhaseConfig()


def test_protocol_defaults() -> None:
    cfg = PhaseConfig()
    assert (cfg.learning_rate, cfg.mu, cfg.lambda1, cfg.lambda2, cfg.lambda_action) == (1e-4, 1e-4, 1.0, 1.0, 2.0)
    assert (cfg.clip_len, cfg.clip_gap) == (50, 10)
    assert (cfg.past_frames, cfg.future_frames, cfg.eval_frames, DT2_EVAL_FRAMES) == (5, 10, 20, 15)
    assert cfg.loss_weights("generator").gamma == 0
    assert cfg.loss_weights("actor").beta == 0
    protocol = cfg.banner().splitlines()[1]
    for token in ("clip_len=50", "gap=10", "n=5", "T_train=10", "T_eval=20", "T_dt2=15", "mu=0.0001", "lr=0.0001"):
        assert token in protocol


@pytest.mark.parametrize(
    "text",
    [
        "n_q = 5\n",
        "batch_size 8\n",
        "batch_size = eight\n",
        "lambda2 = 3\n",
        "phase = sideways\n",
        "actor_normalize = ture\n",
        "actor_normalize = \n",
    ],
)
def test_bad_config_files(tmp_path, monkeypatch, text: str) -> None:
    monkeypatch.chdir(tmp_path)
    path = tmp_path / "bad.txt"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        generate_config(str(path))


@pytest.mark.parametrize("word, expected", [("YES", True), ("on", True), ("1", True), ("Off", False), ("false", False), ("0", False)])
def test_boolean_spellings(tmp_path, monkeypatch, word: str, expected: bool) -> None:
    monkeypatch.chdir(tmp_path)
    path = tmp_path / "flags.txt"
    path.write_text(f"actor_normalize = {word}\n", encoding="utf-8")
    assert generate_config(str(path)).actor_normalize is expected


def test_shipped_config_matches_defaults(tmp_path, monkeypatch) -> None:
    shipped = os.path.join(os.path.dirname(os.path.dirname(__file__)), "config.txt")
    monkeypatch.chdir(tmp_path)
    assert generate_config(shipped) == PhaseConfig()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"past_frames": 1},
        {"future_frames": 0},
        {"actor_dropout": 1.0},
        {"encoder_channels": (4, 4)},
        {"n_a": -1},
    ],
)
def test_phase_config_validation(kwargs: dict) -> None:
    with pytest.raises(ConfigError):
        PhaseConfig(**kwargs)


def test_model_config_json() -> None:
    cfg = ModelConfig(height=64, channels=1, encoder_channels=(2, 3, 4))
    assert ModelConfig.from_json(cfg.to_json()) == cfg
    assert ModelConfig.from_phase_config(PhaseConfig(), 32, 64, 3).width == 64


def test_world_config_validation() -> None:
    with pytest.raises(ConfigError):
        WorldConfig(mode="hover")
    with pytest.raises(ConfigError):
        WorldConfig(action_ranges=((0.1, 0.0),))
