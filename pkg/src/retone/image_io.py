"""Image container, normalization, and lossless file I/O.

Images are 8-bit-coded rasters (H, W, C) with a ``bit_depth`` attribute
recording how many of the 8 bits are significant: a bit_depth-b image only
uses sample values that are exact multiples of ``2**(8-b)``. Supported file
formats are PNG (8-bit gray/RGB), binary PGM (P5) and binary PPM (P6).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from retone.errors import ImageFormatError, ParameterError, ShapeError


@dataclass
class Image:
    """8-bit-coded raster with bit-depth metadata.

    ``data`` is a (height, width, channels) uint8 array, row-major and
    channel-interleaved. ``bit_depth`` is the number of significant
    quantization bits (8 for natural images).
    """

    width: int
    height: int
    channels: int
    data: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ParameterError(f"channels must be 1 or 3, got {self.channels}")
        if not (1 <= self.bit_depth <= 8):
            raise ParameterError(f"bit_depth must be in 1..8, got {self.bit_depth}")
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        expected = (self.height, self.width, self.channels)
        if self.data.shape != expected:
            if self.data.size == self.width * self.height * self.channels:
                self.data = self.data.reshape(expected)
            else:
                raise ShapeError(
                    f"data has {self.data.size} samples, expected "
                    f"{self.width}x{self.height}x{self.channels}"
                )
        if self.bit_depth < 8:
            # b significant bits allow two 8-bit codings: the truncation grid
            # (multiples of 2**(8-b), as bit compression emits) or the
            # full-range display grid ({0, 255} for binary halftones)
            step = 1 << (8 - self.bit_depth)
            if np.any(self.data % step != 0):
                levels = np.floor(
                    np.arange(1 << self.bit_depth) * 255.0 / ((1 << self.bit_depth) - 1) + 0.5
                ).astype(np.uint8)
                if not np.isin(self.data, levels).all():
                    raise ParameterError(
                        f"bit_depth={self.bit_depth} image has samples off both the "
                        f"multiples-of-{step} grid and the full-range grid"
                    )

    @classmethod
    def from_array(cls, arr: np.ndarray, bit_depth: int = 8) -> "Image":
        """Build an Image from an (H, W) or (H, W, C) uint8 array."""
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ShapeError(f"expected 2D or 3D array, got shape {arr.shape}")
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr, bit_depth=bit_depth)

    def copy(self) -> "Image":
        return Image(self.width, self.height, self.channels, self.data.copy(), self.bit_depth)


@dataclass
class Histogram:
    """Counts of sample intensities, either pooled or one row per channel."""

    bins: np.ndarray  # (256,) pooled, or (C, 256) when per_channel
    per_channel: bool

    def total(self) -> int:
        return int(self.bins.sum())


_PNM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _read_pnm(raw: bytes, path: str) -> Image:
    if raw[:2] not in (b"P5", b"P6"):
        raise ImageFormatError(f"{path}: not a binary PGM/PPM file")
    channels = 1 if raw[:2] == b"P5" else 3
    pos = 2
    fields = []
    while len(fields) < 3:
        m = _PNM_TOKEN.match(raw, pos)
        if not m:
            raise ImageFormatError(f"{path}: truncated PNM header")
        fields.append(m.group(1))
        pos = m.end()
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise ImageFormatError(f"{path}: malformed PNM header") from None
    if maxval > 255:
        raise ImageFormatError(f"{path}: 16-bit PNM (maxval {maxval}) is not supported")
    if maxval < 1 or width < 1 or height < 1:
        raise ImageFormatError(f"{path}: invalid PNM header values")
    pos += 1  # single whitespace byte after maxval
    n = width * height * channels
    payload = raw[pos : pos + n]
    if len(payload) != n:
        raise ImageFormatError(f"{path}: truncated PNM payload ({len(payload)} of {n} bytes)")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return Image(width=width, height=height, channels=channels, data=data.copy())


def _read_png(path: str) -> Image:
    from PIL import Image as PILImage, UnidentifiedImageError

    try:
        with PILImage.open(path) as im:
            if im.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise ImageFormatError(f"{path}: 16-bit/float PNG is not supported")
            if im.mode == "P":
                # palette images decode to whatever the palette encodes
                im = im.convert("RGB")
            elif im.mode in ("LA",):
                im = im.convert("L")
            elif im.mode in ("RGBA", "CMYK"):
                im = im.convert("RGB")
            elif im.mode not in ("L", "RGB"):
                raise ImageFormatError(f"{path}: unsupported PNG mode {im.mode!r}")
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError:
        raise ImageFormatError(f"{path}: not a decodable image file") from None
    except OSError as exc:
        raise ImageFormatError(f"{path}: PNG decode failed ({exc})") from None
    return Image.from_array(arr)


def load_image(path) -> Image:
    """Load a PNG, binary PGM, or binary PPM file as an 8-bit Image."""
    path = str(path)
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"{path}: unreadable ({exc})") from None
    if raw[:2] in (b"P5", b"P6"):
        return _read_pnm(raw, path)
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    raise ImageFormatError(f"{path}: unrecognized format (PNG/PGM/PPM expected)")


def save_image(img: Image, path) -> None:
    """Write an Image losslessly; format chosen by file extension."""
    path = str(path)
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        from PIL import Image as PILImage

        arr = img.data[:, :, 0] if img.channels == 1 else img.data
        mode = "L" if img.channels == 1 else "RGB"
        try:
            PILImage.fromarray(arr, mode=mode).save(path, format="PNG")
        except OSError as exc:
            raise ImageFormatError(f"{path}: write failed ({exc})") from None
        return
    if suffix in (".pgm", ".ppm"):
        if suffix == ".pgm" and img.channels != 1:
            raise ImageFormatError(f"{path}: PGM holds grayscale only (image has {img.channels} channels)")
        if suffix == ".ppm" and img.channels != 3:
            raise ImageFormatError(f"{path}: PPM holds color only (image has {img.channels} channels)")
        magic = b"P5" if suffix == ".pgm" else b"P6"
        header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
        try:
            with open(path, "wb") as fh:
                fh.write(header)
                fh.write(img.data.tobytes())
        except OSError as exc:
            raise ImageFormatError(f"{path}: write failed ({exc})") from None
        return
    raise ImageFormatError(f"{path}: unsupported extension {suffix!r} (use .png/.pgm/.ppm)")


def to_tensor(img: Image, dtype=np.float32) -> np.ndarray:
    """Convert an Image to a planar (1, C, H, W) float tensor in [0, 1]."""
    t = img.data.astype(dtype) / dtype(255.0)
    return np.ascontiguousarray(t.transpose(2, 0, 1)[None, :, :, :])


def from_tensor(t: np.ndarray) -> Image:
    """Convert a (1, C, H, W) float tensor back to an 8-bit Image.

    Values are clamped to [0, 1], scaled by 255 and rounded
    half-away-from-zero.
    """
    t = np.asarray(t)
    if t.ndim != 4 or t.shape[0] != 1:
        raise ShapeError(f"expected shape (1, C, H, W), got {t.shape}")
    if t.shape[1] not in (1, 3):
        raise ShapeError(f"channel count must be 1 or 3, got {t.shape[1]}")
    scaled = np.clip(t[0], 0.0, 1.0) * 255.0
    samples = np.floor(scaled.astype(np.float64) + 0.5).astype(np.uint8)
    return Image.from_array(samples.transpose(1, 2, 0))


def intensity_histogram(img: Image, per_channel: bool = False) -> Histogram:
    """Count sample intensities, pooled across channels by default."""
    if per_channel:
        bins = np.stack(
            [np.bincount(img.data[:, :, c].ravel(), minlength=256) for c in range(img.channels)]
        )
    else:
        bins = np.bincount(img.data.ravel(), minlength=256)
    return Histogram(bins=bins.astype(np.int64), per_channel=per_channel)
