"""Forward (lossy) bit-depth compression and display rescaling.

``compress_bits`` keeps only the top ``l`` of ``h`` significant bits of each
sample: v -> floor(v / 2**(h-l)) * 2**(h-l), applied per channel. The result
stays in the 8-bit code domain, so a bit_depth-3 output uses the 8-level grid
{0, 32, 64, ..., 224}. ``rescale_full_range`` is a separate, explicit step
that stretches that grid to fill the display range; the learned expansion
consumes compress_bits outputs, not rescaled ones.
"""

from __future__ import annotations

import numpy as np

from retone.errors import ParameterError
from retone.image_io import Image


def _check_bit_args(l: int, h: int) -> None:
    if not (1 <= l < h <= 8):
        raise ParameterError(f"bit depths must satisfy 1 <= l < h <= 8, got l={l}, h={h}")


def compress_bits(img: Image, l: int, h: int = 8) -> Image:
    """Quantize an image to ``l`` significant bits.

    For h = 8 this is exactly v -> floor(v / 2**(8-l)) * 2**(8-l). For inputs
    whose bit_depth is already below 8, the same truncation is applied to the
    8-bit sample code, which keeps the output on the bit_depth-l grid.
    """
    _check_bit_args(l, h)
    if img.bit_depth > h:
        raise ParameterError(
            f"image has bit_depth {img.bit_depth}, more than the declared source depth h={h}"
        )
    shift = 8 - l
    data = (img.data >> shift) << shift
    return Image(img.width, img.height, img.channels, data, bit_depth=l)


def rescale_full_range(img: Image, l: int, h: int = 8) -> Image:
    """Stretch a compress_bits output to fill the 8-bit display range.

    Each sample v becomes round((v / 2**(h-l)) * (2**h - 1) / (2**l - 1)),
    which maps level 0 to 0 and the top level to 255 monotonically.
    """
    _check_bit_args(l, h)
    step = 1 << (h - l)
    if np.any(img.data % step != 0):
        raise ParameterError(
            f"image is not a compress_bits(l={l}, h={h}) output: samples off the {step}-grid"
        )
    levels = img.data.astype(np.float64) / step
    scale = ((1 << h) - 1) / ((1 << l) - 1)
    data = np.floor(levels * scale + 0.5).astype(np.uint8)
    return Image(img.width, img.height, img.channels, data, bit_depth=8)
