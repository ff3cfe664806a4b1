"""Bit-depth companding and inverse halftoning toolkit.

A library and CLI for two low-level restoration tasks: expanding
bit-depth-compressed images back to 8 bits and reconstructing
continuous-tone images from error-diffused halftones. Both restorations
are learned by a small encoder-decoder network trained against a
feature-space loss, using a self-contained numpy engine (no autodiff
framework required).
"""

from retone.image_io import Image, Histogram, load_image, save_image, to_tensor, from_tensor, intensity_histogram
from retone.companding import compress_bits, rescale_full_range
from retone.halftone import floyd_steinberg
from retone.metrics import psnr, ssim

__version__ = "0.1.0"

__all__ = [
    "Image",
    "Histogram",
    "load_image",
    "save_image",
    "to_tensor",
    "from_tensor",
    "intensity_histogram",
    "compress_bits",
    "rescale_full_range",
    "floyd_steinberg",
    "psnr",
    "ssim",
]
