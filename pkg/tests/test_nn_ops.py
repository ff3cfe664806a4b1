import numpy as np
import pytest

from retone.errors import NumericsError, ParameterError, ShapeError
from retone.nn import gradcheck, ops


def test_conv2d_scalar_case():
    x = np.array([[[[2.5]]]])
    p = ops.ConvParams(weight=np.array([[[[3.0]]]]), bias=np.zeros(1))
    out, _ = ops.conv2d(x, p)
    assert out.item() == pytest.approx(7.5)


def test_conv2d_identity_kernel():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 1, 6, 6))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    p = ops.ConvParams(weight=w, bias=np.zeros(1), stride=1, padding=1)
    out, _ = ops.conv2d(x, p)
    assert np.allclose(out, x)


def test_conv2d_output_size_law():
    x = np.zeros((1, 1, 11, 7))
    p = ops.ConvParams(weight=np.zeros((2, 1, 4, 4)), bias=np.zeros(2), stride=2, padding=1)
    out, _ = ops.conv2d(x, p)
    assert out.shape == (1, 2, (11 + 2 - 4) // 2 + 1, (7 + 2 - 4) // 2 + 1)


def test_conv2d_shape_validation():
    x = np.zeros((1, 2, 4, 4))
    p = ops.ConvParams(weight=np.zeros((1, 3, 3, 3)), bias=np.zeros(1))
    with pytest.raises(ShapeError):
        ops.conv2d(x, p)


def test_conv2d_nonfinite_detection():
    x = np.full((1, 1, 2, 2), np.inf)
    p = ops.ConvParams(weight=np.ones((1, 1, 1, 1)), bias=np.zeros(1))
    with pytest.raises(NumericsError):
        ops.conv2d(x, p)


def test_conv2d_linearity_without_bias():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 2, 6, 6))
    y = rng.standard_normal((1, 2, 6, 6))
    p = ops.ConvParams(weight=rng.standard_normal((3, 2, 3, 3)), bias=np.zeros(3), padding=1)
    fx, _ = ops.conv2d(x, p)
    fy, _ = ops.conv2d(y, p)
    fxy, _ = ops.conv2d(x + y, p)
    fax, _ = ops.conv2d(2.5 * x, p)
    assert np.allclose(fxy, fx + fy, rtol=1e-6)
    assert np.allclose(fax, 2.5 * fx, rtol=1e-6)


def test_conv_transpose_upsampling_shape():
    x = np.zeros((1, 4, 5, 9))
    p = ops.ConvParams(weight=np.zeros((4, 2, 4, 4)), bias=np.zeros(2), stride=2, padding=1)
    out, _ = ops.conv_transpose2d(x, p)
    assert out.shape == (1, 2, 10, 18)


def test_adjoint_identity_many_instances():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        cin = int(rng.integers(1, 4))
        cout = int(rng.integers(1, 5))
        k = int(rng.choice([3, 4]))
        s = int(rng.choice([1, 2]))
        pad = int(rng.choice([0, 1]))
        h = int(rng.integers(4, 9))
        while (h + 2 * pad - k) % s:
            h += 1
        x = rng.standard_normal((2, cin, h, h))
        w = rng.standard_normal((cout, cin, k, k))
        conv_p = ops.ConvParams(weight=w, bias=np.zeros(cout), stride=s, padding=pad)
        tconv_p = ops.ConvParams(weight=w, bias=np.zeros(cin), stride=s, padding=pad)
        cx, _ = ops.conv2d(x, conv_p)
        y = rng.standard_normal(cx.shape)
        ty, _ = ops.conv_transpose2d(y, tconv_p)
        lhs = float((cx * y).sum())
        rhs = float((x * ty).sum())
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    assert worst < 1e-6


def test_batchnorm_constant_input_is_zeroed():
    x = np.zeros((2, 3, 4, 4))
    x[:, 0] = 5.0
    x[:, 1] = -2.0
    p = ops.BatchNormParams.create(3, dtype=np.float64)
    out, _ = ops.batchnorm(x, p, mode="train")
    assert np.abs(out).max() < 1e-3


def test_batchnorm_normalizes_batch_statistics():
    rng = np.random.default_rng(3)
    x = rng.normal(3.0, 2.0, size=(4, 3, 8, 8))
    p = ops.BatchNormParams.create(3, dtype=np.float64)
    out, _ = ops.batchnorm(x, p, mode="train")
    assert np.abs(out.mean(axis=(0, 2, 3))).max() < 1e-5
    assert np.abs(out.var(axis=(0, 2, 3)) - 1).max() < 1e-3


def test_batchnorm_running_stats_and_eval():
    rng = np.random.default_rng(4)
    p = ops.BatchNormParams.create(2, dtype=np.float64)
    x = rng.normal(1.0, 3.0, size=(8, 2, 6, 6))
    ops.batchnorm(x, p, mode="train")
    assert p.batches_tracked == 1
    # new = 0.9 * old + 0.1 * batch
    assert np.allclose(p.running_mean, 0.1 * x.mean(axis=(0, 2, 3)))
    out, _ = ops.batchnorm(x, p, mode="eval")
    expected = (x - p.running_mean[None, :, None, None]) / np.sqrt(
        p.running_var[None, :, None, None] + p.eps
    )
    assert np.allclose(out, expected)


def test_batchnorm_eval_without_stats_errors():
    p = ops.BatchNormParams(gamma=np.ones(2), beta=np.zeros(2))
    with pytest.raises(ParameterError):
        ops.batchnorm(np.zeros((1, 2, 4, 4)), p, mode="eval")


def test_leaky_relu_values_and_subgradient():
    x = np.array([[[[1.0, -1.0, 0.0]]]])
    out, cache = ops.leaky_relu(x, 0.2)
    assert out.ravel().tolist() == [1.0, -0.2, 0.0]
    grad = ops.leaky_relu_backward(cache, np.ones_like(x))
    assert grad.ravel().tolist() == [1.0, 0.2, 1.0]  # 0 takes the positive branch


def test_concat_and_split_round_trip():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((1, 2, 4, 4))
    b = rng.standard_normal((1, 5, 4, 4))
    out, cache = ops.concat_channels(a, b)
    assert out.shape == (1, 7, 4, 4)
    ga, gb = ops.concat_channels_backward(cache, out)
    assert np.array_equal(ga, a) and np.array_equal(gb, b)
    with pytest.raises(ShapeError):
        ops.concat_channels(a, rng.standard_normal((1, 2, 5, 4)))


def test_maxpool_basics_and_tie_break():
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
    out, cache = ops.maxpool2d(x)
    assert out.item() == 4.0
    const = np.ones((1, 1, 4, 4))
    out, cache = ops.maxpool2d(const)
    assert (out == 1).all()
    grad = ops.maxpool2d_backward(cache, np.ones_like(out))
    # ties send the whole gradient to the first window slot
    assert grad[0, 0, 0, 0] == 1.0 and grad[0, 0, 0, 1] == 0.0
    assert grad.sum() == out.size
    with pytest.raises(ShapeError):
        ops.maxpool2d(np.zeros((1, 1, 5, 4)))


def test_determinism_bitwise():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
    p = ops.ConvParams(
        weight=rng.standard_normal((4, 3, 4, 4)).astype(np.float32),
        bias=rng.standard_normal(4).astype(np.float32),
        stride=2,
        padding=1,
    )
    a, _ = ops.conv2d(x, p)
    b, _ = ops.conv2d(x.copy(), p)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# finite-difference checks


def test_gradcheck_layer_suite():
    for report in gradcheck.standard_suite(full=False):
        assert report.passed, report.line()


def test_gradcheck_detects_corrupted_backward():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1, 2, 5, 5))
    p = ops.ConvParams(weight=rng.standard_normal((2, 2, 3, 3)), bias=np.zeros(2), padding=1)
    out, cache = ops.conv2d(x, p)
    r = rng.standard_normal(out.shape)
    gx, _, _ = ops.conv2d_backward(cache, r)
    corrupted = gx * 1.05  # a 5% scaling bug must be flagged
    numeric = gradcheck.numeric_gradient(lambda v: float((ops.conv2d(v, p)[0] * r).sum()), x)
    report = gradcheck.GradCheckReport("corrupted", gradcheck.relative_error(corrupted, numeric), 1e-4)
    assert not report.passed
