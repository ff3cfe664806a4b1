"""PSNR and SSIM quality metrics on 8-bit images."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from retone.errors import ShapeError
from retone.image_io import Image

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


def _check_pair(a: Image, b: Image) -> None:
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise ShapeError(
            f"image shapes differ: {a.width}x{a.height}x{a.channels} vs "
            f"{b.width}x{b.height}x{b.channels}"
        )


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images.

    MSE is pooled over all pixels and channels.
    """
    _check_pair(a, b)
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = np.mean(diff * diff)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(255.0**2 / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_plane(x: np.ndarray, y: np.ndarray, win: np.ndarray) -> float:
    # valid-region windowed statistics, matching the reference formulation
    mu_x = convolve2d(x, win, mode="valid")
    mu_y = convolve2d(y, win, mode="valid")
    xx = convolve2d(x * x, win, mode="valid")
    yy = convolve2d(y * y, win, mode="valid")
    xy = convolve2d(x * y, win, mode="valid")
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


def ssim(a: Image, b: Image) -> float:
    """Structural similarity index with an 11x11 Gaussian window (sigma 1.5).

    Color images score as the mean of per-channel SSIM. Requires
    min(H, W) >= 11.
    """
    _check_pair(a, b)
    if min(a.height, a.width) < SSIM_WINDOW:
        raise ShapeError(f"images must be at least {SSIM_WINDOW}px on each side for SSIM")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    scores = [
        _ssim_plane(
            a.data[:, :, c].astype(np.float64),
            b.data[:, :, c].astype(np.float64),
            win,
        )
        for c in range(a.channels)
    ]
    return float(np.mean(scores))
