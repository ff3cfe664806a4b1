"""Layer forward/backward implementations.

Convolutions go through an explicit im2col/col2im pair so both directions
reduce to dense matrix products, and the transposed convolution is the exact
adjoint of conv2d (it reuses the same column scatter that conv2d's input
gradient uses). The kernel-offset loops in _im2col/_col2im fix the
accumulation order, so repeated runs give bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from retone.errors import NumericsError, ParameterError, ShapeError


def ensure_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericsError(f"{name} produced non-finite values")
    return arr


@dataclass
class ConvParams:
    """Weights for conv2d / conv_transpose2d.

    ``weight`` is (C_out, C_in, kH, kW) in conv2d orientation. Used by
    conv_transpose2d, the same weight maps C_out-channel inputs to
    C_in-channel outputs (the adjoint direction), so there ``bias`` has
    length C_in.
    """

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weight.ndim != 4:
            raise ShapeError(f"conv weight must be 4D, got shape {self.weight.shape}")
        if self.stride < 1:
            raise ParameterError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ParameterError(f"padding must be >= 0, got {self.padding}")


@dataclass
class BatchNormParams:
    """Per-channel affine normalization state.

    Train mode normalizes with batch statistics over (N, H, W) and updates
    the running estimates as new = (1 - momentum) * old + momentum * batch.
    Eval mode uses the running estimates; ``create`` initializes them to
    (0, 1), and eval before they are set at all is an error.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None
    eps: float = 1e-5
    momentum: float = 0.1
    batches_tracked: int = 0

    @classmethod
    def create(cls, channels: int, dtype=np.float32) -> "BatchNormParams":
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
        )


def _conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - k) // stride + 1
    if size + 2 * pad < k or out < 1:
        raise ShapeError(f"kernel {k} does not fit input of size {size} with padding {pad}")
    return out


def _pad_spatial(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _im2col(x_pad: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Gather sliding windows into (N, C*kH*kW, Ho*Wo) columns."""
    n, c, _, _ = x_pad.shape
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x_pad.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x_pad[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im(cols: np.ndarray, n: int, c: int, hp: int, wp: int, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Scatter-add columns back onto the padded canvas (adjoint of _im2col)."""
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    return out


def conv2d(x: np.ndarray, p: ConvParams):
    """Cross-correlation plus bias. Returns (out, cache)."""
    n, c, h, w = x.shape
    c_out, c_in, kh, kw = p.weight.shape
    if c != c_in:
        raise ShapeError(f"conv2d expects {c_in} input channels, got {c}")
    if p.bias.shape != (c_out,):
        raise ShapeError(f"conv2d bias must have shape ({c_out},), got {p.bias.shape}")
    ho = _conv_out_size(h, kh, p.stride, p.padding)
    wo = _conv_out_size(w, kw, p.stride, p.padding)
    x_pad = _pad_spatial(x, p.padding)
    cols = _im2col(x_pad, kh, kw, p.stride, ho, wo)
    w2 = p.weight.reshape(c_out, c_in * kh * kw)
    out = np.matmul(w2, cols) + p.bias[None, :, None]
    out = ensure_finite("conv2d", out.reshape(n, c_out, ho, wo))
    cache = (x.shape, cols, p, ho, wo)
    return out, cache


def conv2d_backward(cache, grad_out: np.ndarray, need_weight_grads: bool = True):
    """Gradients of conv2d: (grad_x, grad_weight, grad_bias)."""
    (n, c, h, w), cols, p, ho, wo = cache
    c_out, c_in, kh, kw = p.weight.shape
    g = grad_out.reshape(n, c_out, ho * wo)
    if need_weight_grads:
        grad_w = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(p.weight.shape)
        grad_b = g.sum(axis=(0, 2))
    else:
        grad_w = None
        grad_b = None
    w2 = p.weight.reshape(c_out, c_in * kh * kw)
    dcols = np.matmul(w2.T, g)
    hp, wp = h + 2 * p.padding, w + 2 * p.padding
    dx_pad = _col2im(dcols, n, c_in, hp, wp, kh, kw, p.stride, ho, wo)
    if p.padding:
        dx = dx_pad[:, :, p.padding : p.padding + h, p.padding : p.padding + w]
    else:
        dx = dx_pad
    return np.ascontiguousarray(dx), grad_w, grad_b


def conv_transpose2d(x: np.ndarray, p: ConvParams):
    """Transposed convolution: the exact adjoint of conv2d with ``p.weight``.

    Input has C_out channels (the conv's output side), output has C_in.
    Output size is (in - 1) * stride - 2 * padding + kernel.
    """
    n, c, h, w = x.shape
    c_out, c_in, kh, kw = p.weight.shape
    if c != c_out:
        raise ShapeError(f"conv_transpose2d expects {c_out} input channels, got {c}")
    if p.bias.shape != (c_in,):
        raise ShapeError(f"conv_transpose2d bias must have shape ({c_in},), got {p.bias.shape}")
    ho = (h - 1) * p.stride - 2 * p.padding + kh
    wo = (w - 1) * p.stride - 2 * p.padding + kw
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv_transpose2d output would be {ho}x{wo}")
    w2 = p.weight.reshape(c_out, c_in * kh * kw)
    dcols = np.matmul(w2.T, x.reshape(n, c_out, h * w))
    hp, wp = ho + 2 * p.padding, wo + 2 * p.padding
    canvas = _col2im(dcols, n, c_in, hp, wp, kh, kw, p.stride, h, w)
    if p.padding:
        out = canvas[:, :, p.padding : p.padding + ho, p.padding : p.padding + wo]
    else:
        out = canvas
    out = np.ascontiguousarray(out) + p.bias[None, :, None, None]
    out = ensure_finite("conv_transpose2d", out)
    cache = (x, p, ho, wo)
    return out, cache


def conv_transpose2d_backward(cache, grad_out: np.ndarray, need_weight_grads: bool = True):
    """Gradients of conv_transpose2d: (grad_x, grad_weight, grad_bias).

    Because the forward pass is the adjoint of conv2d, grad_x is a plain
    conv2d of grad_out, and grad_weight correlates grad_out (as conv input)
    with x (as conv output gradient).
    """
    x, p, ho, wo = cache
    n, c_out, h, w = x.shape
    _, c_in, kh, kw = p.weight.shape
    g_pad = _pad_spatial(grad_out, p.padding)
    gcols = _im2col(g_pad, kh, kw, p.stride, h, w)
    w2 = p.weight.reshape(c_out, c_in * kh * kw)
    grad_x = np.matmul(w2, gcols).reshape(n, c_out, h, w)
    if need_weight_grads:
        grad_w = np.matmul(x.reshape(n, c_out, h * w), gcols.transpose(0, 2, 1)).sum(axis=0)
        grad_w = grad_w.reshape(p.weight.shape)
        grad_b = grad_out.sum(axis=(0, 2, 3))
    else:
        grad_w = None
        grad_b = None
    return grad_x, grad_w, grad_b


def batchnorm(x: np.ndarray, p: BatchNormParams, mode: str = "train"):
    """Spatial batch normalization. Returns (out, cache).

    Train mode mutates the running statistics on ``p`` as a side effect;
    the output itself depends only on the current batch.
    """
    n, c, h, w = x.shape
    if p.gamma.shape != (c,):
        raise ShapeError(f"batchnorm expects {p.gamma.shape[0]} channels, got {c}")
    if mode == "train":
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + x.dtype.type(p.eps))
        x_hat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
        if p.running_mean is None:
            p.running_mean = np.zeros(c, dtype=x.dtype)
            p.running_var = np.ones(c, dtype=x.dtype)
        m = np.asarray(p.momentum, dtype=p.running_mean.dtype)
        p.running_mean[...] = (1 - m) * p.running_mean + m * mu
        p.running_var[...] = (1 - m) * p.running_var + m * var
        p.batches_tracked += 1
    elif mode == "eval":
        if p.running_mean is None or p.running_var is None:
            raise ParameterError("batchnorm eval mode before any running stats are set")
        inv_std = 1.0 / np.sqrt(p.running_var + x.dtype.type(p.eps))
        x_hat = (x - p.running_mean[None, :, None, None]) * inv_std[None, :, None, None]
    else:
        raise ParameterError(f"unknown batchnorm mode {mode!r}")
    out = p.gamma[None, :, None, None] * x_hat + p.beta[None, :, None, None]
    out = ensure_finite("batchnorm", out)
    cache = (x_hat, inv_std, p, mode)
    return out, cache


def batchnorm_backward(cache, grad_out: np.ndarray):
    """Gradients of batchnorm: (grad_x, grad_gamma, grad_beta)."""
    x_hat, inv_std, p, mode = cache
    grad_gamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    scale = (p.gamma * inv_std)[None, :, None, None]
    if mode == "eval":
        return grad_out * scale, grad_gamma, grad_beta
    mean_g = grad_out.mean(axis=(0, 2, 3))[None, :, None, None]
    mean_gx = (grad_out * x_hat).mean(axis=(0, 2, 3))[None, :, None, None]
    grad_x = scale * (grad_out - mean_g - x_hat * mean_gx)
    return grad_x, grad_gamma, grad_beta


def leaky_relu(x: np.ndarray, slope: float = 0.2):
    """max(x, slope*x); the subgradient at 0 follows the positive branch."""
    out = np.where(x >= 0, x, x.dtype.type(slope) * x)
    return out, (x >= 0, slope)


def leaky_relu_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    positive, slope = cache
    return np.where(positive, grad_out, grad_out.dtype.type(slope) * grad_out)


def relu(x: np.ndarray):
    return leaky_relu(x, 0.0)


def relu_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    return leaky_relu_backward(cache, grad_out)


def concat_channels(a: np.ndarray, b: np.ndarray):
    """Concatenate along the channel axis. Returns (out, cache)."""
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels needs matching N/H/W, got {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=1), a.shape[1]


def concat_channels_backward(cache, grad_out: np.ndarray):
    """Split the gradient back into the two concatenated sources."""
    c_a = cache
    return grad_out[:, :c_a], grad_out[:, c_a:]


def maxpool2d(x: np.ndarray, k: int = 2, stride: int = 2):
    """2x2/2 max pooling; ties route the gradient to the first window slot."""
    if k != 2 or stride != 2:
        raise ParameterError("only 2x2 stride-2 max pooling is supported")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d needs even spatial dims, got {h}x{w}")
    ho, wo = h // 2, w // 2
    windows = x.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2d_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    idx, (n, c, h, w) = cache
    ho, wo = h // 2, w // 2
    flat = np.zeros((n, c, ho, wo, 4), dtype=grad_out.dtype)
    np.put_along_axis(flat, idx[..., None], grad_out[..., None], axis=-1)
    return flat.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
