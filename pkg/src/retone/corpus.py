"""Seeded synthetic corpus generator.

Produces photograph-like test images (smooth tonal fields, textured
regions, and hard-edged objects spanning the full tonal range) so the
pipeline can be exercised and anchored without shipping a photo dataset.
Every image is a pure function of (seed, index), so corpora are
reproducible file-for-file.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from retone.errors import ParameterError
from retone.image_io import Image, save_image


def _smooth_field(rng: np.random.Generator, size: int, sigma: float) -> np.ndarray:
    field = gaussian_filter(rng.standard_normal((size, size)), sigma, mode="reflect")
    lo, hi = field.min(), field.max()
    if hi - lo < 1e-9:
        return np.zeros((size, size))
    return (field - lo) / (hi - lo)


def _gradient(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    theta = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9)
    return ramp


def _shapes(rng: np.random.Generator, size: int, count: int) -> np.ndarray:
    """Layered soft-edged ellipses; returns values in [0, 1] and a coverage mask."""
    canvas = np.zeros((size, size))
    mask = np.zeros((size, size))
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(count):
        cy, cx = rng.uniform(0, size, size=2)
        ry, rx = rng.uniform(size * 0.06, size * 0.35, size=2)
        angle = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(angle) + dy * np.sin(angle)
        v = -dx * np.sin(angle) + dy * np.cos(angle)
        d = (u / rx) ** 2 + (v / ry) ** 2
        alpha = np.clip((1.0 - d) * 4.0, 0.0, 1.0)
        level = rng.uniform(0.0, 1.0)
        canvas = canvas * (1 - alpha) + level * alpha
        mask = np.maximum(mask, alpha)
    return canvas, mask


NOISE_TEXTURE_AMP = 0.05
NOISE_TEXTURE_SIGMA = 1.4
GRATING_TEXTURE_AMP = 0.13


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Fine-grained detail: filtered noise plus a couple of oriented gratings.

    Amplitudes are tuned so quantization and halftoning of the corpus land in
    the quality ranges reported for photographic test sets.
    """
    noise = gaussian_filter(rng.standard_normal((size, size)), NOISE_TEXTURE_SIGMA, mode="reflect")
    noise /= max(noise.std(), 1e-9)
    yy, xx = np.mgrid[0:size, 0:size]
    grating = np.zeros((size, size))
    for _ in range(2):
        freq = rng.uniform(0.08, 0.30)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        grating += np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
    grating /= max(grating.std(), 1e-9)
    detail = NOISE_TEXTURE_AMP * noise + GRATING_TEXTURE_AMP * grating
    coverage = _smooth_field(rng, size, 12)
    return detail * (0.4 + 0.6 * coverage)


def _luminance_plane(rng: np.random.Generator, size: int) -> np.ndarray:
    base = 0.55 * _smooth_field(rng, size, rng.uniform(6, 18)) + 0.45 * _gradient(rng, size)
    shapes, mask = _shapes(rng, size, int(rng.integers(3, 8)))
    blend = rng.uniform(0.5, 0.9)
    plane = base * (1 - blend * mask) + shapes * (blend * mask)
    # stretch toward the full tonal range with a random contrast curve
    lo, hi = np.quantile(plane, [0.02, 0.98])
    plane = np.clip((plane - lo) / max(hi - lo, 1e-9), 0.0, 1.0)
    gamma = rng.uniform(0.8, 1.25)
    return np.clip(plane**gamma + _texture(rng, size), 0.0, 1.0)


def synth_image(seed: int, index: int, size: int = 128, channels: int = 3) -> Image:
    """Generate one deterministic synthetic image."""
    if channels not in (1, 3):
        raise ParameterError(f"channels must be 1 or 3, got {channels}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
    luma = _luminance_plane(rng, size)
    if channels == 1:
        data = np.floor(luma * 255.0 + 0.5).astype(np.uint8)[:, :, None]
        return Image.from_array(data)
    planes = []
    for _ in range(3):
        tint = rng.uniform(0.75, 1.0)
        shift = rng.uniform(-0.08, 0.08)
        chroma = 0.12 * _smooth_field(rng, size, rng.uniform(10, 24))
        planes.append(np.clip(luma * tint + shift + chroma - 0.06, 0.0, 1.0))
    data = np.floor(np.stack(planes, axis=-1) * 255.0 + 0.5).astype(np.uint8)
    return Image.from_array(data)


def make_corpus(out_dir, count: int, size: int = 128, channels: int = 3, seed: int = 0) -> list[str]:
    """Write ``count`` PNG images into ``out_dir``; returns the file paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        img = synth_image(seed, i, size=size, channels=channels)
        path = out / f"img_{i:04d}.png"
        save_image(img, path)
        paths.append(str(path))
    return paths
