"""Finite-difference verification of every analytic backward pass.

All checks run in float64 with central differences of step 1e-5 and report
the worst relative error across all checked coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from retone.nn import ops

FD_STEP = 1e-5


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def line(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"{self.name:<40s} max rel err {self.max_rel_error:.3e}  (tol {self.tolerance:.0e})  {status}"


def numeric_gradient(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of scalar f at x, one coordinate at a time."""
    x = x.astype(np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max over coordinates of |a - n| / max(|a|, |n|), treating tiny pairs as equal."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"gradient shapes differ: {a.shape} vs {b.shape}")
    denom = np.maximum(np.abs(a), np.abs(b))
    diff = np.abs(a - b)
    mask = denom > 1e-7
    if not mask.any():
        return 0.0
    return float((diff[mask] / denom[mask]).max())


def _loss_weights(rng: np.random.Generator, shape) -> np.ndarray:
    # random projection makes the scalar loss sensitive to every output
    return rng.standard_normal(shape)


def check_conv2d(seed: int = 0, tolerance: float = 1e-4) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 5, 5))
    p = ops.ConvParams(
        weight=rng.standard_normal((4, 3, 3, 3)),
        bias=rng.standard_normal(4),
        stride=2,
        padding=1,
    )
    out, cache = ops.conv2d(x, p)
    r = _loss_weights(rng, out.shape)
    gx, gw, gb = ops.conv2d_backward(cache, r)
    worst = 0.0
    worst = max(worst, relative_error(gx, numeric_gradient(lambda v: float((ops.conv2d(v, p)[0] * r).sum()), x)))

    def loss_w(wv):
        q = ops.ConvParams(weight=wv, bias=p.bias, stride=p.stride, padding=p.padding)
        return float((ops.conv2d(x, q)[0] * r).sum())

    def loss_b(bv):
        q = ops.ConvParams(weight=p.weight, bias=bv, stride=p.stride, padding=p.padding)
        return float((ops.conv2d(x, q)[0] * r).sum())

    worst = max(worst, relative_error(gw, numeric_gradient(loss_w, p.weight)))
    worst = max(worst, relative_error(gb, numeric_gradient(loss_b, p.bias)))
    return GradCheckReport("conv2d", worst, tolerance)


def check_conv_transpose2d(seed: int = 1, tolerance: float = 1e-4) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 4, 3, 3))
    p = ops.ConvParams(
        weight=rng.standard_normal((4, 3, 4, 4)),
        bias=rng.standard_normal(3),
        stride=2,
        padding=1,
    )
    out, cache = ops.conv_transpose2d(x, p)
    r = _loss_weights(rng, out.shape)
    gx, gw, gb = ops.conv_transpose2d_backward(cache, r)
    worst = 0.0
    worst = max(
        worst,
        relative_error(gx, numeric_gradient(lambda v: float((ops.conv_transpose2d(v, p)[0] * r).sum()), x)),
    )

    def loss_w(wv):
        q = ops.ConvParams(weight=wv, bias=p.bias, stride=p.stride, padding=p.padding)
        return float((ops.conv_transpose2d(x, q)[0] * r).sum())

    def loss_b(bv):
        q = ops.ConvParams(weight=p.weight, bias=bv, stride=p.stride, padding=p.padding)
        return float((ops.conv_transpose2d(x, q)[0] * r).sum())

    worst = max(worst, relative_error(gw, numeric_gradient(loss_w, p.weight)))
    worst = max(worst, relative_error(gb, numeric_gradient(loss_b, p.bias)))
    return GradCheckReport("conv_transpose2d", worst, tolerance)


def check_batchnorm(seed: int = 2, tolerance: float = 1e-4) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 4, 5, 5))

    def make_params():
        p = ops.BatchNormParams.create(4, dtype=np.float64)
        p.gamma[...] = rng2.standard_normal(4)
        p.beta[...] = rng2.standard_normal(4)
        return p

    rng2 = np.random.default_rng(seed + 100)
    p = make_params()
    out, cache = ops.batchnorm(x, p, mode="train")
    r = _loss_weights(rng, out.shape)
    gx, gg, gb = ops.batchnorm_backward(cache, r)

    def loss_x(v):
        q = ops.BatchNormParams(p.gamma.copy(), p.beta.copy(), p.running_mean.copy(), p.running_var.copy(), p.eps, p.momentum)
        return float((ops.batchnorm(v, q, mode="train")[0] * r).sum())

    def loss_gamma(gv):
        q = ops.BatchNormParams(gv, p.beta.copy(), p.running_mean.copy(), p.running_var.copy(), p.eps, p.momentum)
        return float((ops.batchnorm(x, q, mode="train")[0] * r).sum())

    def loss_beta(bv):
        q = ops.BatchNormParams(p.gamma.copy(), bv, p.running_mean.copy(), p.running_var.copy(), p.eps, p.momentum)
        return float((ops.batchnorm(x, q, mode="train")[0] * r).sum())

    worst = relative_error(gx, numeric_gradient(loss_x, x))
    worst = max(worst, relative_error(gg, numeric_gradient(loss_gamma, p.gamma)))
    worst = max(worst, relative_error(gb, numeric_gradient(loss_beta, p.beta)))
    return GradCheckReport("batchnorm", worst, tolerance)


def check_leaky_relu(seed: int = 3, tolerance: float = 1e-4) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 4, 4))
    x[np.abs(x) < 0.05] += 0.1  # keep coordinates away from the kink
    worst = 0.0
    for slope in (0.2, 0.0):
        out, cache = ops.leaky_relu(x, slope)
        r = _loss_weights(rng, out.shape)
        gx = ops.leaky_relu_backward(cache, r)
        num = numeric_gradient(lambda v: float((ops.leaky_relu(v, slope)[0] * r).sum()), x)
        worst = max(worst, relative_error(gx, num))
    return GradCheckReport("leaky_relu/relu", worst, tolerance)


def check_maxpool2d(seed: int = 4, tolerance: float = 1e-4) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    # distinct values keep the argmax stable under the probe step
    x = rng.permutation(2 * 3 * 4 * 4).astype(np.float64).reshape(2, 3, 4, 4)
    out, cache = ops.maxpool2d(x)
    r = _loss_weights(rng, out.shape)
    gx = ops.maxpool2d_backward(cache, r)
    num = numeric_gradient(lambda v: float((ops.maxpool2d(v)[0] * r).sum()), x)
    return GradCheckReport("maxpool2d", relative_error(gx, num), tolerance)


def check_concat(seed: int = 5, tolerance: float = 1e-4) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, 2, 3, 3))
    b = rng.standard_normal((2, 3, 3, 3))
    out, cache = ops.concat_channels(a, b)
    r = _loss_weights(rng, out.shape)
    ga, gb = ops.concat_channels_backward(cache, r)
    num_a = numeric_gradient(lambda v: float((ops.concat_channels(v, b)[0] * r).sum()), a)
    num_b = numeric_gradient(lambda v: float((ops.concat_channels(a, v)[0] * r).sum()), b)
    worst = max(relative_error(ga, num_a), relative_error(gb, num_b))
    return GradCheckReport("concat_channels", worst, tolerance)


def check_perceptual_loss(seed: int = 6, tolerance: float = 1e-4) -> GradCheckReport:
    from retone.perceptual import FeatureNet, perceptual_loss

    rng = np.random.default_rng(seed)
    net = FeatureNet.random(seed=seed + 1, width_scale=0.125, dtype=np.float64)
    y_hat = rng.standard_normal((2, 3, 8, 8)) * 0.3 + 0.5
    y = rng.standard_normal((2, 3, 8, 8)) * 0.3 + 0.5
    worst = 0.0
    for tap in ("conv1_1", "conv2_1"):
        loss, grad = perceptual_loss(net, y_hat, y, tap)
        num = numeric_gradient(lambda v: perceptual_loss(net, v, y, tap)[0], y_hat)
        worst = max(worst, relative_error(grad, num))
    return GradCheckReport("perceptual_loss", worst, tolerance)


def check_unet_end_to_end(seed: int = 7, tolerance: float = 1e-3) -> GradCheckReport:
    """Full-network check: loss gradients w.r.t. every trainable parameter."""
    from retone.perceptual import FeatureNet, perceptual_loss
    from retone.unet import UNetConfig, build_unet, unet_backward, unet_forward

    rng = np.random.default_rng(seed)
    cfg = UNetConfig(depth=2, base_channels=4, in_channels=1, out_channels=1)
    params = build_unet(cfg, seed=seed + 1, dtype=np.float64)
    net = FeatureNet.random(seed=seed + 2, width_scale=0.0625, dtype=np.float64)
    x = rng.standard_normal((2, 1, 8, 8)) * 0.3 + 0.5
    y = rng.standard_normal((2, 1, 8, 8)) * 0.3 + 0.5

    def loss_value() -> float:
        out, _ = unet_forward(params, x, mode="train")
        return perceptual_loss(net, out, y, "conv1_1")[0]

    out, cache = unet_forward(params, x, mode="train")
    loss, grad_out = perceptual_loss(net, out, y, "conv1_1")
    grads, _ = unet_backward(params, cache, grad_out)

    worst = 0.0
    for name, tensor in params.named_tensors():
        if name not in grads:
            continue  # running statistics are not trainable
        analytic = grads[name]
        numeric = np.zeros_like(tensor)
        flat = tensor.ravel()
        nflat = numeric.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + FD_STEP
            hi = loss_value()
            flat[i] = orig - FD_STEP
            lo = loss_value()
            flat[i] = orig
            nflat[i] = (hi - lo) / (2.0 * FD_STEP)
        worst = max(worst, relative_error(analytic, numeric))
    return GradCheckReport("unet+perceptual end-to-end", worst, tolerance)


def standard_suite(full: bool = False) -> list[GradCheckReport]:
    """Run every layer check; with ``full``, add the end-to-end network check."""
    reports = [
        check_conv2d(),
        check_conv_transpose2d(),
        check_batchnorm(),
        check_leaky_relu(),
        check_maxpool2d(),
        check_concat(),
        check_perceptual_loss(),
    ]
    if full:
        reports.append(check_unet_end_to_end())
    return reports
