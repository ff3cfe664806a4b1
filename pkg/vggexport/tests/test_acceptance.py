"""Export round-trip criteria, verified against the consumer's loader.

Uses a locally constructed VGG-19 state dict (random weights, canonical
shapes) so the tests run without downloading the pretrained model; the
export path is identical either way.
"""

import hashlib

import numpy as np
import pytest
import torch
from torchvision.models import vgg19

from vggexport.exporter import VGG19_CONV_LAYERS, ExportError, export


@pytest.fixture(scope="module")
def state_dict_file(tmp_path_factory):
    torch.manual_seed(0)
    model = vgg19(weights=None)
    path = tmp_path_factory.mktemp("weights") / "vgg19.pth"
    torch.save(model.state_dict(), path)
    return path


def test_export_shapes_and_manifest(state_dict_file, tmp_path):
    out = tmp_path / "phi.nnwt"
    manifest = export(out, source=str(state_dict_file))
    assert len(manifest.layers) == 13
    assert manifest.layers["conv1_1"] == (64, 3, 3, 3)
    assert manifest.layers["conv5_1"] == (512, 512, 3, 3)
    assert out.exists()
    assert manifest.sha256 == hashlib.sha256(out.read_bytes()).hexdigest()
    text = manifest.text()
    assert "conv1_1.weight" in text and "103.939" in text


def test_reexport_is_checksum_stable(state_dict_file, tmp_path):
    a = export(tmp_path / "a.nnwt", source=str(state_dict_file))
    b = export(tmp_path / "b.nnwt", source=str(state_dict_file))
    assert a.sha256 == b.sha256
    assert (tmp_path / "a.nnwt").read_bytes() == (tmp_path / "b.nnwt").read_bytes()


def test_output_parses_in_primary_loader(state_dict_file, tmp_path):
    retone_weights = pytest.importorskip("retone.weights_io")
    out = tmp_path / "phi.nnwt"
    export(out, source=str(state_dict_file))
    tensors = retone_weights.read_nnwt(out)
    assert len(tensors) == 26  # 13 weights + 13 biases
    for name, _, shape in VGG19_CONV_LAYERS:
        assert tensors[f"{name}.weight"].shape == shape
        assert tensors[f"{name}.bias"].shape == (shape[0],)
    # bit-exact round trip against the source values
    state = torch.load(state_dict_file, map_location="cpu", weights_only=True)
    src = state["features.0.weight"].numpy().astype(np.float32)
    assert np.array_equal(tensors["conv1_1.weight"], src)


def test_consumer_feature_extractor_runs(state_dict_file, tmp_path):
    perceptual = pytest.importorskip("retone.perceptual")
    out = tmp_path / "phi.nnwt"
    export(out, source=str(state_dict_file))
    net = perceptual.FeatureNet.from_nnwt(out)
    assert net.preprocess == "vgg"
    x = np.random.default_rng(0).random((1, 3, 64, 64)).astype(np.float32)
    feats = perceptual.phi_features(net, x, "conv1_1")
    assert feats.shape == (1, 64, 64, 64)
    loss, grad = perceptual.perceptual_loss(net, x, x.copy(), "conv1_1")
    assert loss == 0.0
    assert np.all(grad == 0)


def test_missing_and_malformed_sources(tmp_path):
    with pytest.raises(ExportError, match="not found"):
        export(tmp_path / "out.nnwt", source=str(tmp_path / "nope.pth"))
    assert not (tmp_path / "out.nnwt").exists()

    bad = tmp_path / "bad.pth"
    torch.save({"features.0.weight": torch.zeros(2, 2)}, bad)
    with pytest.raises(ExportError):
        export(tmp_path / "out2.nnwt", source=str(bad))
    assert not (tmp_path / "out2.nnwt").exists()
