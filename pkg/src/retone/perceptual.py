"""Fixed feature extractor and the feature-space training loss.

The extractor is a 3x3-conv / ReLU / maxpool stack with the 19-layer VGG
topology up to its fifth scale group. Taps are the outputs of the convX_1
layers, taken before their own ReLU, so a tap at an identity convolution
degenerates to plain per-pixel MSE. Weights are fixed: either imported from
an NNWT container (converted from a pretrained model) or drawn once from a
seeded generator, which is the self-contained default. The loss between two
images is the mean squared difference of their tap features, normalized by
feature count and averaged over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from retone.errors import ParameterError, ShapeError
from retone.nn.ops import (
    ConvParams,
    conv2d,
    conv2d_backward,
    ensure_finite,
    maxpool2d,
    maxpool2d_backward,
    relu,
    relu_backward,
)
from retone.weights_io import read_nnwt

# (layer name, output width) per scale group; "pool" marks a 2x2 downsample
VGG19_PREFIX = (
    ("conv1_1", 64),
    ("conv1_2", 64),
    "pool",
    ("conv2_1", 128),
    ("conv2_2", 128),
    "pool",
    ("conv3_1", 256),
    ("conv3_2", 256),
    ("conv3_3", 256),
    ("conv3_4", 256),
    "pool",
    ("conv4_1", 512),
    ("conv4_2", 512),
    ("conv4_3", 512),
    ("conv4_4", 512),
    "pool",
    ("conv5_1", 512),
)

TAP_NAMES = ("conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1")

# BGR channel means used by the published pretrained weights
VGG_BGR_MEANS = (103.939, 116.779, 123.68)


@dataclass
class FeatureNet:
    """Immutable conv/relu/pool stack with named tap layers.

    ``preprocess`` is "unit" (inputs used as-is, the random-weights path) or
    "vgg" (inputs in [0, 1] are scaled to [0, 255], reordered to BGR, and
    mean-subtracted, matching the imported weights' convention).
    """

    layers: list  # "pool" markers and (name, ConvParams) entries
    preprocess: str = "unit"

    @classmethod
    def random(cls, seed: int, width_scale: float = 1.0, dtype=np.float32) -> "FeatureNet":
        """Seeded fixed random weights with the canonical topology.

        ``width_scale`` shrinks every layer width (minimum 1 channel) for
        cheap desk-scale runs; 1.0 keeps the canonical widths.
        """
        if width_scale <= 0:
            raise ParameterError("width_scale must be positive")
        rng = np.random.default_rng(seed)
        layers = []
        c_in = 3
        for entry in VGG19_PREFIX:
            if entry == "pool":
                layers.append("pool")
                continue
            name, width = entry
            c_out = max(1, round(width * width_scale))
            std = np.sqrt(2.0 / (c_in * 9))  # He scaling keeps activations O(1)
            layers.append(
                (
                    name,
                    ConvParams(
                        weight=rng.normal(0.0, std, size=(c_out, c_in, 3, 3)).astype(dtype),
                        bias=np.zeros(c_out, dtype=dtype),
                        stride=1,
                        padding=1,
                    ),
                )
            )
            c_in = c_out
        return cls(layers=layers, preprocess="unit")

    @classmethod
    def from_nnwt(cls, path, dtype=np.float32) -> "FeatureNet":
        """Load imported weights ("convX_Y.weight"/"convX_Y.bias") from a container."""
        tensors = read_nnwt(path)
        layers = []
        c_in = 3
        for entry in VGG19_PREFIX:
            if entry == "pool":
                layers.append("pool")
                continue
            name, width = entry
            wkey, bkey = f"{name}.weight", f"{name}.bias"
            if wkey not in tensors or bkey not in tensors:
                raise ParameterError(f"{path}: missing {name} tensors")
            w = tensors[wkey].astype(dtype)
            b = tensors[bkey].astype(dtype)
            if w.shape != (width, c_in, 3, 3) or b.shape != (width,):
                raise ParameterError(
                    f"{path}: {name} has shape {w.shape}/{b.shape}, expected "
                    f"{(width, c_in, 3, 3)}/{(width,)}"
                )
            layers.append((name, ConvParams(weight=w, bias=b, stride=1, padding=1)))
            c_in = width
        return cls(layers=layers, preprocess="vgg")

    def tap_index(self, tap: str) -> int:
        for i, entry in enumerate(self.layers):
            if entry != "pool" and entry[0] == tap:
                return i
        raise ParameterError(f"unknown tap {tap!r}; expected one of {TAP_NAMES}")

    def pool_factor(self, tap: str) -> int:
        idx = self.tap_index(tap)
        pools = sum(1 for entry in self.layers[:idx] if entry == "pool")
        return 1 << pools


def _prepare_input(net: FeatureNet, x: np.ndarray):
    """Map 1- or 3-channel input into the extractor's 3-channel domain."""
    n, c, h, w = x.shape
    if c == 1:
        x3 = np.concatenate([x, x, x], axis=1)
    elif c == 3:
        x3 = x
    else:
        raise ShapeError(f"feature extractor takes 1 or 3 channels, got {c}")
    if net.preprocess == "vgg":
        x3 = x3[:, ::-1] * x.dtype.type(255.0)
        means = np.asarray(VGG_BGR_MEANS, dtype=x.dtype)[None, :, None, None]
        x3 = x3 - means
    return np.ascontiguousarray(x3), c


def _input_grad(grad3: np.ndarray, net: FeatureNet, channels: int, dtype) -> np.ndarray:
    if net.preprocess == "vgg":
        grad3 = np.ascontiguousarray(grad3[:, ::-1]) * dtype.type(255.0)
    if channels == 1:
        return grad3.sum(axis=1, keepdims=True)
    return grad3


def _forward(net: FeatureNet, x: np.ndarray, tap: str, keep_caches: bool):
    idx = net.tap_index(tap)
    factor = net.pool_factor(tap)
    if x.shape[2] % factor or x.shape[3] % factor:
        raise ShapeError(
            f"spatial dims {x.shape[2]}x{x.shape[3]} not divisible by pool factor {factor} at {tap}"
        )
    h, channels = _prepare_input(net, x)
    caches = []
    for i, entry in enumerate(net.layers[: idx + 1]):
        if entry == "pool":
            h, cache = maxpool2d(h)
            caches.append(("pool", cache))
            continue
        name, p = entry
        h, cache = conv2d(h, p)
        caches.append(("conv", cache))
        if i == idx:
            break
        h, cache = relu(h)
        caches.append(("relu", cache))
    ensure_finite(f"phi({tap})", h)
    return h, (caches if keep_caches else None), channels


def phi_features(net: FeatureNet, x: np.ndarray, tap: str) -> np.ndarray:
    """Feature map of ``x`` at the named tap layer."""
    features, _, _ = _forward(net, x, tap, keep_caches=False)
    return features


def perceptual_loss(net: FeatureNet, y_hat: np.ndarray, y: np.ndarray, tap: str):
    """Feature-space squared distance and its gradient w.r.t. ``y_hat``.

    loss = mean over batch of sum((phi(y_hat) - phi(y))**2) / (C*H*W) at the
    tap; ``y`` is treated as a constant.
    """
    if y_hat.shape != y.shape:
        raise ShapeError(f"shapes differ: {y_hat.shape} vs {y.shape}")
    f_hat, caches, channels = _forward(net, y_hat, tap, keep_caches=True)
    f_ref, _, _ = _forward(net, y, tap, keep_caches=False)
    n, c, h, w = f_hat.shape
    diff = f_hat - f_ref
    norm = y_hat.dtype.type(c * h * w)
    loss = float((diff * diff).sum() / (norm * n))
    g = diff * (y_hat.dtype.type(2.0) / (norm * y_hat.dtype.type(n)))
    for kind, cache in reversed(caches):
        if kind == "conv":
            g, _, _ = conv2d_backward(cache, g, need_weight_grads=False)
        elif kind == "relu":
            g = relu_backward(cache, g)
        else:
            g = maxpool2d_backward(cache, g)
    grad_y_hat = _input_grad(g, net, channels, y_hat.dtype)
    return loss, grad_y_hat
