import math

import numpy as np
import pytest

from acvg.errors import GeometryError, ShapeError
from acvg.utils.metrics import PSNR_CAP, action_l2_curve, frame_l1, gaussian_window, psnr, ssim


def test_psnr_is_capped_for_identical_frames() -> None:
    frame = np.random.default_rng(0).random((8, 8, 3))
    assert psnr(frame, frame) == PSNR_CAP


def test_psnr_of_constant_offset() -> None:
    assert psnr(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(20.0)


def test_ssim_of_identical_frames() -> None:
    frame = np.random.default_rng(1).random((32, 32, 3))
    assert ssim(frame, frame) == pytest.approx(1.0)


def test_ssim_drops_with_noise() -> None:
    rng = np.random.default_rng(2)
    frame = rng.random((32, 32))
    noisy = np.clip(frame + rng.normal(0, 0.2, frame.shape), 0, 1)
    assert ssim(frame, noisy) < 0.9


def test_ssim_needs_a_full_window() -> None:
    with pytest.raises(GeometryError):
        ssim(np.zeros((8, 8, 1)), np.zeros((8, 8, 1)))


def test_mismatched_shapes() -> None:
    with pytest.raises(ShapeError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_gaussian_window_sums_to_one() -> None:
    window = gaussian_window()
    assert window.shape == (11, 11)
    assert window.sum() == pytest.approx(1.0)
    assert window[5, 5] == window.max()


def test_frame_l1() -> None:
    assert frame_l1(np.zeros((2, 2)), np.full((2, 2), 0.25)) == 0.25


def test_action_l2_curve() -> None:
    actions = np.array([[0.0, 0.0], [1.0, 1.0]])
    predicted = np.array([[0.3, 0.4], [1.0, 1.0]])
    np.testing.assert_allclose(action_l2_curve(actions, predicted), [0.5, 0.0])
    np.testing.assert_allclose(action_l2_curve(actions, predicted, per_dimension=True), [[0.3, 0.4], [0.0, 0.0]])


def test_scores_fall_as_noise_grows() -> None:
    rng = np.random.default_rng(3)
    frame = rng.random((32, 32, 3))
    unit = rng.uniform(-1.0, 1.0, frame.shape)
    noisy = [np.clip(frame + amplitude * unit, 0.0, 1.0) for amplitude in (0.05, 0.1, 0.2)]
    psnrs = [psnr(frame, x) for x in noisy]
    ssims = [ssim(frame, x) for x in noisy]
    assert psnrs == sorted(psnrs, reverse=True)
    assert ssims == sorted(ssims, reverse=True)


def reference_ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Window-by-window SSIM with centred moments."""
    size, sigma = 11, 1.5
    offsets = np.arange(size) - size // 2
    g = np.array([[math.exp(-(i * i + j * j) / (2.0 * sigma * sigma)) for j in offsets] for i in offsets])
    g /= g.sum()
    c1, c2 = 0.01**2, 0.03**2
    scores = []
    for r in range(x.shape[0] - size + 1):
        for c in range(x.shape[1] - size + 1):
            px, py = x[r : r + size, c : c + size], y[r : r + size, c : c + size]
            mx, my = np.sum(g * px), np.sum(g * py)
            vx, vy = np.sum(g * (px - mx) ** 2), np.sum(g * (py - my) ** 2)
            cov = np.sum(g * (px - mx) * (py - my))
            scores.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(scores))


@pytest.mark.parametrize("seed", range(3))
def test_ssim_matches_windowed_reference(seed: int) -> None:
    rng = np.random.default_rng(seed)
    a = rng.random((16, 16))
    b = np.clip(a + rng.normal(0.0, 0.1, a.shape), 0.0, 1.0)
    c = rng.random((16, 16))
    assert abs(ssim(a, b) - reference_ssim(a, b)) < 1e-6
    assert abs(ssim(a, c) - reference_ssim(a, c)) < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_ssim_is_symmetric(seed: int) -> None:
    rng = np.random.default_rng(seed)
    a, b = rng.random((20, 24, 3)), rng.random((20, 24, 3))
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12
