import numpy as np
import pytest

from retone.errors import ParameterError, ShapeError
from retone.nn.ops import ConvParams
from retone.perceptual import TAP_NAMES, FeatureNet, perceptual_loss, phi_features
from retone.weights_io import write_nnwt


def test_tap_shape_laws():
    net = FeatureNet.random(seed=0, width_scale=0.25)
    x = np.random.default_rng(0).standard_normal((1, 3, 64, 64)).astype(np.float32)
    f1 = phi_features(net, x, "conv1_1")
    assert f1.shape[0] == 1 and f1.shape[2:] == (64, 64)  # no pooling before first tap
    f3 = phi_features(net, x, "conv3_1")
    assert f3.shape[2:] == (16, 16)  # two pools precede the third group
    f5 = phi_features(net, x, "conv5_1")
    assert f5.shape[2:] == (4, 4)


def test_unknown_tap_and_indivisible_dims():
    net = FeatureNet.random(seed=0, width_scale=0.25)
    x = np.zeros((1, 3, 64, 64), dtype=np.float32)
    with pytest.raises(ParameterError, match="tap"):
        phi_features(net, x, "conv9_9")
    with pytest.raises(ShapeError):
        phi_features(net, np.zeros((1, 3, 66, 66), dtype=np.float32), "conv3_1")


def test_features_deterministic_and_weights_fixed():
    net = FeatureNet.random(seed=1, width_scale=0.25)
    x = np.random.default_rng(1).standard_normal((2, 3, 32, 32)).astype(np.float32)
    a = phi_features(net, x, "conv2_1")
    b = phi_features(net, x, "conv2_1")
    assert np.array_equal(a, b)
    again = FeatureNet.random(seed=1, width_scale=0.25)
    assert np.array_equal(
        phi_features(again, x, "conv2_1"), a
    )  # same seed rebuilds identical weights


def test_gray_input_accepted():
    net = FeatureNet.random(seed=2, width_scale=0.25)
    x = np.random.default_rng(2).standard_normal((1, 1, 16, 16)).astype(np.float32)
    f = phi_features(net, x, "conv1_1")
    assert f.shape[2:] == (16, 16)


def test_loss_zero_for_identical_inputs():
    net = FeatureNet.random(seed=3, width_scale=0.25)
    x = np.random.default_rng(3).standard_normal((2, 3, 16, 16)).astype(np.float32)
    loss, grad = perceptual_loss(net, x, x.copy(), "conv2_1")
    assert loss == 0.0
    assert np.all(grad == 0)


def test_loss_symmetry_and_nonnegativity():
    net = FeatureNet.random(seed=4, width_scale=0.25)
    rng = np.random.default_rng(4)
    a = rng.standard_normal((1, 3, 16, 16)).astype(np.float32)
    b = rng.standard_normal((1, 3, 16, 16)).astype(np.float32)
    la, _ = perceptual_loss(net, a, b, "conv1_1")
    lb, _ = perceptual_loss(net, b, a, "conv1_1")
    assert la >= 0
    assert la == pytest.approx(lb, rel=1e-6)


def test_identity_extractor_degenerates_to_mse(tmp_path):
    # delta-kernel conv1_1: the feature distance is exactly per-pixel MSE
    w = np.zeros((1, 3, 3, 3), dtype=np.float64)
    w[0, :, 1, 1] = np.array([1.0, 0.0, 0.0])
    net = FeatureNet(
        layers=[("conv1_1", ConvParams(weight=w, bias=np.zeros(1, dtype=np.float64), stride=1, padding=1))],
        preprocess="unit",
    )
    rng = np.random.default_rng(5)
    y_hat = rng.standard_normal((2, 3, 8, 8))
    y = rng.standard_normal((2, 3, 8, 8))
    loss, _ = perceptual_loss(net, y_hat, y, "conv1_1")
    mse = float(((y_hat[:, 0] - y[:, 0]) ** 2).mean())
    assert loss == pytest.approx(mse, rel=1e-12)


def test_loss_size_invariance_for_stationary_inputs():
    net = FeatureNet.random(seed=6, width_scale=0.25)
    rng = np.random.default_rng(6)

    def noise_loss(size):
        a = rng.standard_normal((4, 3, size, size)).astype(np.float32) * 0.2 + 0.5
        b = rng.standard_normal((4, 3, size, size)).astype(np.float32) * 0.2 + 0.5
        return perceptual_loss(net, a, b, "conv2_1")[0]

    small = noise_loss(16)
    large = noise_loss(32)
    assert abs(large - small) / small < 0.10


def test_gradient_matches_finite_differences():
    from retone.nn.gradcheck import numeric_gradient, relative_error

    net = FeatureNet.random(seed=7, width_scale=0.125, dtype=np.float64)
    rng = np.random.default_rng(7)
    y_hat = rng.standard_normal((1, 3, 8, 8)) * 0.3 + 0.5
    y = rng.standard_normal((1, 3, 8, 8)) * 0.3 + 0.5
    _, grad = perceptual_loss(net, y_hat, y, "conv2_1")
    num = numeric_gradient(lambda v: perceptual_loss(net, v, y, "conv2_1")[0], y_hat)
    assert relative_error(grad, num) < 1e-4


def test_shape_mismatch_rejected():
    net = FeatureNet.random(seed=8, width_scale=0.25)
    with pytest.raises(ShapeError):
        perceptual_loss(
            net,
            np.zeros((1, 3, 16, 16), dtype=np.float32),
            np.zeros((1, 3, 8, 8), dtype=np.float32),
            "conv1_1",
        )


def test_import_from_container(tmp_path):
    rng = np.random.default_rng(9)
    tensors = {}
    widths = {1: 64, 2: 128, 3: 256, 4: 512, 5: 512}
    counts = {1: 2, 2: 2, 3: 4, 4: 4, 5: 1}
    c_in = 3
    for group in range(1, 6):
        for idx in range(1, counts[group] + 1):
            name = f"conv{group}_{idx}"
            c_out = widths[group]
            tensors[f"{name}.weight"] = rng.standard_normal((c_out, c_in, 3, 3)).astype(np.float32) * 0.05
            tensors[f"{name}.bias"] = np.zeros(c_out, dtype=np.float32)
            c_in = c_out
    path = tmp_path / "phi.nnwt"
    write_nnwt(path, tensors)
    net = FeatureNet.from_nnwt(path)
    assert net.preprocess == "vgg"
    x = np.random.default_rng(10).standard_normal((1, 3, 32, 32)).astype(np.float32) * 0.2 + 0.5
    feats = phi_features(net, x, "conv1_1")
    assert feats.shape == (1, 64, 32, 32)
    loss, grad = perceptual_loss(net, x, x.copy(), "conv1_1")
    assert loss == 0.0 and np.all(grad == 0)
    for tap in TAP_NAMES:
        assert net.pool_factor(tap) == {"conv1_1": 1, "conv2_1": 2, "conv3_1": 4, "conv4_1": 8, "conv5_1": 16}[tap]
