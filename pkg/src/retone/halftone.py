"""Floyd-Steinberg error-diffusion halftoning.

Classic raster-order variant: scan left to right, top to bottom, threshold
the accumulated value at 128, and push the residual error onto the four
unprocessed neighbors with weights 7/16 (right), 3/16 (below-left),
5/16 (below), 1/16 (below-right). Weights that fall outside the image are
dropped without renormalization. Channels are processed independently.
"""

from __future__ import annotations

import numpy as np

from retone.errors import ParameterError
from retone.image_io import Image


def _dither_plane(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    out = np.empty((h, w), dtype=np.uint8)
    # error accumulates in float; plain lists keep the sequential scan fast
    cur = plane[0].astype(np.float64).tolist()
    for y in range(h):
        nxt = plane[y + 1].astype(np.float64).tolist() if y + 1 < h else None
        row_out = bytearray(w)
        for x in range(w):
            u = cur[x]
            if u >= 128.0:
                row_out[x] = 255
                e = u - 255.0
            else:
                e = u
            if x + 1 < w:
                cur[x + 1] += e * 0.4375  # 7/16
            if nxt is not None:
                if x > 0:
                    nxt[x - 1] += e * 0.1875  # 3/16
                nxt[x] += e * 0.3125  # 5/16
                if x + 1 < w:
                    nxt[x + 1] += e * 0.0625  # 1/16
        out[y] = np.frombuffer(bytes(row_out), dtype=np.uint8)
        if nxt is not None:
            cur = nxt
    return out


def floyd_steinberg(img: Image) -> Image:
    """Halftone an 8-bit image to a binary one with samples in {0, 255}."""
    if img.bit_depth != 8:
        raise ParameterError(f"halftoning expects an 8-bit image, got bit_depth {img.bit_depth}")
    planes = [_dither_plane(img.data[:, :, c]) for c in range(img.channels)]
    data = np.stack(planes, axis=-1)
    return Image(img.width, img.height, img.channels, data, bit_depth=1)
