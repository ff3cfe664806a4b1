"""Encoder-decoder network with skip concatenation.

The encoder is a chain of 4x4 stride-2 convolutions (LeakyReLU 0.2), the
decoder mirrors it with 4x4 stride-2 transposed convolutions (ReLU). Every
layer except the first encoder conv and the last decoder conv is followed by
batch normalization. Each decoder stage above the bottleneck consumes the
concatenation of the upsampled features and the same-resolution encoder
activation, which contribute half of its input channels each. The final
layer is linear; clamping only happens at image conversion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from retone.errors import ParameterError, ShapeError, WeightsFormatError
from retone.nn.ops import (
    BatchNormParams,
    ConvParams,
    batchnorm,
    batchnorm_backward,
    concat_channels,
    concat_channels_backward,
    conv2d,
    conv2d_backward,
    conv_transpose2d,
    conv_transpose2d_backward,
    leaky_relu,
    leaky_relu_backward,
    relu,
    relu_backward,
)
from retone.weights_io import read_nnwt, write_nnwt

KERNEL = 4
STRIDE = 2
PAD = 1
WEIGHT_INIT_STD = 0.02


@dataclass
class UNetConfig:
    depth: int = 4
    base_channels: int = 32
    in_channels: int = 3
    out_channels: int = 3
    leaky_slope: float = 0.2
    channel_cap: int = 256

    def __post_init__(self):
        if self.depth < 1:
            raise ParameterError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ParameterError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.in_channels not in (1, 3) or self.out_channels not in (1, 3):
            raise ParameterError("in/out channels must be 1 or 3")
        if self.channel_cap < self.base_channels:
            raise ParameterError("channel_cap must be >= base_channels")

    def ladder(self) -> list[int]:
        """Channel counts [in, stage1, ..., stageD]."""
        return [self.in_channels] + [
            min(self.base_channels << i, self.channel_cap) for i in range(self.depth)
        ]


@dataclass
class UNetParams:
    cfg: UNetConfig
    encoder: list = field(default_factory=list)  # dicts with "conv" and optional "bn"
    decoder: list = field(default_factory=list)  # dicts with "tconv" and optional "bn"

    def named_tensors(self):
        """Yield (name, array) for every tensor, deterministic order, live views."""
        for i, st in enumerate(self.encoder, start=1):
            yield f"enc{i}.conv.weight", st["conv"].weight
            yield f"enc{i}.conv.bias", st["conv"].bias
            if st.get("bn") is not None:
                yield from _bn_tensors(f"enc{i}.bn", st["bn"])
        for j, st in enumerate(self.decoder, start=1):
            yield f"dec{j}.tconv.weight", st["tconv"].weight
            yield f"dec{j}.tconv.bias", st["tconv"].bias
            if st.get("bn") is not None:
                yield from _bn_tensors(f"dec{j}.bn", st["bn"])

    def trainable(self) -> dict[str, np.ndarray]:
        """Parameters the optimizer updates (running statistics excluded)."""
        out = {}
        for name, arr in self.named_tensors():
            if ".bn.running_" in name or name.endswith(".bn.batches"):
                continue
            out[name] = arr
        return out


def _bn_tensors(prefix: str, bn: BatchNormParams):
    yield f"{prefix}.gamma", bn.gamma
    yield f"{prefix}.beta", bn.beta
    yield f"{prefix}.running_mean", bn.running_mean
    yield f"{prefix}.running_var", bn.running_var
    yield f"{prefix}.batches", np.asarray([bn.batches_tracked], dtype=bn.gamma.dtype)


def build_unet(cfg: UNetConfig, seed: int, dtype=np.float32) -> UNetParams:
    """Initialize all parameters from a seeded generator (Normal(0, 0.02))."""
    rng = np.random.default_rng(seed)

    def conv_init(c_out, c_in):
        w = rng.normal(0.0, WEIGHT_INIT_STD, size=(c_out, c_in, KERNEL, KERNEL)).astype(dtype)
        return w

    ch = cfg.ladder()
    params = UNetParams(cfg=cfg)
    for i in range(cfg.depth):
        stage = {
            "conv": ConvParams(
                weight=conv_init(ch[i + 1], ch[i]),
                bias=np.zeros(ch[i + 1], dtype=dtype),
                stride=STRIDE,
                padding=PAD,
            ),
            "bn": BatchNormParams.create(ch[i + 1], dtype=dtype) if i > 0 else None,
        }
        params.encoder.append(stage)
    for j in range(cfg.depth):
        c_in = ch[cfg.depth] if j == 0 else 2 * ch[cfg.depth - j]
        c_out = ch[cfg.depth - 1 - j] if j < cfg.depth - 1 else cfg.out_channels
        stage = {
            "tconv": ConvParams(
                weight=conv_init(c_in, c_out),  # (tconv_in, tconv_out, k, k)
                bias=np.zeros(c_out, dtype=dtype),
                stride=STRIDE,
                padding=PAD,
            ),
            "bn": BatchNormParams.create(c_out, dtype=dtype) if j < cfg.depth - 1 else None,
        }
        params.decoder.append(stage)
    return params


def unet_forward(params: UNetParams, x: np.ndarray, mode: str = "train"):
    """Run the network; returns (output, cache). Output shape equals input shape."""
    cfg = params.cfg
    n, c, h, w = x.shape
    if c != cfg.in_channels:
        raise ShapeError(f"network expects {cfg.in_channels} channels, got {c}")
    factor = 1 << cfg.depth
    if h % factor or w % factor:
        raise ShapeError(f"spatial dims {h}x{w} must be divisible by {factor}")
    skips = []
    caches = {"mode": mode, "enc": [], "dec": []}
    for i, st in enumerate(params.encoder):
        x, c_conv = conv2d(x, st["conv"])
        c_bn = None
        if st["bn"] is not None:
            x, c_bn = batchnorm(x, st["bn"], mode)
        x, c_act = leaky_relu(x, cfg.leaky_slope)
        caches["enc"].append((c_conv, c_bn, c_act))
        if i < cfg.depth - 1:
            skips.append(x)
    for j, st in enumerate(params.decoder):
        x, c_t = conv_transpose2d(x, st["tconv"])
        if j < cfg.depth - 1:
            x, c_bn = batchnorm(x, st["bn"], mode)
            x, c_act = relu(x)
            x, c_cat = concat_channels(x, skips[cfg.depth - 2 - j])
            caches["dec"].append((c_t, c_bn, c_act, c_cat))
        else:
            caches["dec"].append((c_t, None, None, None))
    return x, caches


def unet_backward(params: UNetParams, caches, grad_out: np.ndarray):
    """Exact gradients for every trainable tensor; returns (grads, grad_input)."""
    if caches.get("mode") != "train":
        raise ParameterError("backward needs a cache from a train-mode forward")
    cfg = params.cfg
    grads: dict[str, np.ndarray] = {}
    skip_grads: dict[int, np.ndarray] = {}
    g = grad_out
    for j in range(cfg.depth - 1, -1, -1):
        c_t, c_bn, c_act, c_cat = caches["dec"][j]
        if j < cfg.depth - 1:
            g, g_skip = concat_channels_backward(c_cat, g)
            skip_grads[cfg.depth - 2 - j] = g_skip
            g = relu_backward(c_act, g)
            g, gg, gb = batchnorm_backward(c_bn, g)
            grads[f"dec{j + 1}.bn.gamma"] = gg
            grads[f"dec{j + 1}.bn.beta"] = gb
        g, gw, gbias = conv_transpose2d_backward(c_t, g)
        grads[f"dec{j + 1}.tconv.weight"] = gw
        grads[f"dec{j + 1}.tconv.bias"] = gbias
    for i in range(cfg.depth - 1, -1, -1):
        st = params.encoder[i]
        c_conv, c_bn, c_act = caches["enc"][i]
        if i in skip_grads:
            g = g + skip_grads[i]
        g = leaky_relu_backward(c_act, g)
        if st["bn"] is not None:
            g, gg, gb = batchnorm_backward(c_bn, g)
            grads[f"enc{i + 1}.bn.gamma"] = gg
            grads[f"enc{i + 1}.bn.beta"] = gb
        g, gw, gbias = conv2d_backward(c_conv, g)
        grads[f"enc{i + 1}.conv.weight"] = gw
        grads[f"enc{i + 1}.conv.bias"] = gbias
    return grads, g


_CONFIG_KEY = "unet.config"


def weights_tensors(params: UNetParams) -> dict[str, np.ndarray]:
    """Configuration record plus every parameter tensor, container-ready."""
    cfg = params.cfg
    tensors = {
        _CONFIG_KEY: np.asarray(
            [cfg.depth, cfg.base_channels, cfg.in_channels, cfg.out_channels, cfg.channel_cap, cfg.leaky_slope],
            dtype=np.float32,
        )
    }
    tensors.update({name: arr for name, arr in params.named_tensors()})
    return tensors


def save_weights(params: UNetParams, path) -> None:
    """Serialize configuration and all tensors into an NNWT container."""
    write_nnwt(path, weights_tensors(params))


def load_weights(path, dtype=np.float32) -> UNetParams:
    """Rebuild a parameter set from an NNWT container written by save_weights."""
    return params_from_tensors(read_nnwt(path), source=str(path), dtype=dtype)


def params_from_tensors(tensors: dict, source: str = "<tensors>", dtype=np.float32) -> UNetParams:
    """Rebuild UNetParams from an already-parsed tensor dict."""
    if _CONFIG_KEY not in tensors:
        raise WeightsFormatError(f"{source}: missing {_CONFIG_KEY!r} record")
    raw = tensors[_CONFIG_KEY]
    cfg = UNetConfig(
        depth=int(raw[0]),
        base_channels=int(raw[1]),
        in_channels=int(raw[2]),
        out_channels=int(raw[3]),
        leaky_slope=float(raw[5]),
        channel_cap=int(raw[4]),
    )
    params = build_unet(cfg, seed=0, dtype=dtype)
    expected = dict(params.named_tensors())
    for name, target in expected.items():
        if name not in tensors:
            raise WeightsFormatError(f"{source}: missing tensor {name!r}")
        src = tensors[name]
        if tuple(src.shape) != tuple(target.shape):
            raise WeightsFormatError(
                f"{source}: tensor {name!r} has shape {src.shape}, expected {target.shape}"
            )
        target[...] = src.astype(dtype)
    extras = set(tensors) - set(expected) - {_CONFIG_KEY}
    if extras:
        raise WeightsFormatError(f"{source}: unexpected tensors {sorted(extras)}")
    for stages, key in ((params.encoder, "enc"), (params.decoder, "dec")):
        for idx, st in enumerate(stages, start=1):
            bn = st.get("bn")
            if bn is not None:
                bn.batches_tracked = int(tensors[f"{key}{idx}.bn.batches"][0])
    return params
