import numpy as np
from scipy.signal import convolve2d

from acvg.errors import GeometryError, ShapeError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"cannot compare frames of shape {x.shape} and {y.shape}")
    return x, y


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """Peak signal-to-noise ratio for values in [0, 1], capped at 99 dB."""
    x, y = _check_pair(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    y, x = np.ogrid[-half : half + 1, -half : half + 1]
    window = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    return window / window.sum()


def _ssim_plane(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> float:
    c1, c2 = SSIM_K1**2, SSIM_K2**2

    def filt(plane):
        return convolve2d(plane, window, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
    sigma_xx = filt(x * x) - mu_xx
    sigma_yy = filt(y * y) - mu_yy
    sigma_xy = filt(x * y) - mu_xy
    ssim_map = ((2 * mu_xy + c1) * (2 * sigma_xy + c2)) / ((mu_xx + mu_yy + c1) * (sigma_xx + sigma_yy + c2))
    return float(ssim_map.mean())


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Windowed SSIM of (H, W) or channel-last (H, W, C) frames, averaged over channels."""
    x, y = _check_pair(x, y)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    if x.ndim != 3:
        raise ShapeError(f"ssim expects (H, W) or (H, W, C) frames, got {x.shape}")
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise GeometryError(f"frames of {x.shape[0]}x{x.shape[1]} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    window = gaussian_window()
    return float(np.mean([_ssim_plane(x[..., c], y[..., c], window) for c in range(x.shape[-1])]))


def frame_l1(x: np.ndarray, y: np.ndarray) -> float:
    x, y = _check_pair(x, y)
    return float(np.mean(np.abs(x - y)))


def action_l2_curve(actions: np.ndarray, predicted: np.ndarray, per_dimension: bool = False) -> np.ndarray:
    """Per-timestep Euclidean error of (T, m) action sequences; (T, m)
    absolute errors with `per_dimension`."""
    actions, predicted = _check_pair(actions, predicted)
    if actions.ndim == 1:
        actions, predicted = actions[:, None], predicted[:, None]
    if per_dimension:
        return np.abs(actions - predicted)
    return np.sqrt(np.sum((actions - predicted) ** 2, axis=-1))
