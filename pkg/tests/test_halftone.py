import numpy as np
import pytest

from retone.errors import ParameterError
from retone.halftone import floyd_steinberg
from retone.image_io import Image


def reference_trace(row):
    """Independent scalar Floyd-Steinberg trace for a single row."""
    vals = [float(v) for v in row]
    out = []
    for x in range(len(vals)):
        if vals[x] >= 128.0:
            out.append(255)
            e = vals[x] - 255.0
        else:
            out.append(0)
            e = vals[x]
        if x + 1 < len(vals):
            vals[x + 1] += e * 7.0 / 16.0
    return out


def test_constant_extremes():
    white = Image.from_array(np.full((8, 8, 1), 255, dtype=np.uint8))
    assert (floyd_steinberg(white).data == 255).all()
    black = Image.from_array(np.zeros((8, 8, 1), dtype=np.uint8))
    assert (floyd_steinberg(black).data == 0).all()


def test_hand_traced_pair():
    img = Image.from_array(np.array([[128, 128]], dtype=np.uint8)[:, :, None])
    out = floyd_steinberg(img)
    assert out.data.ravel().tolist() == [255, 0]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_single_row_matches_reference_trace(seed):
    rng = np.random.default_rng(seed)
    row = rng.integers(0, 256, size=24, dtype=np.uint8)
    img = Image.from_array(row[None, :, None])
    out = floyd_steinberg(img)
    assert out.data.ravel().tolist() == reference_trace(row)


def test_binary_alphabet_and_bit_depth():
    rng = np.random.default_rng(3)
    img = Image.from_array(rng.integers(0, 256, size=(20, 17, 3), dtype=np.uint8))
    out = floyd_steinberg(img)
    assert out.bit_depth == 1
    assert set(np.unique(out.data)) <= {0, 255}


@pytest.mark.parametrize("g", [30, 77, 128, 200])
def test_mean_preservation(g):
    img = Image.from_array(np.full((64, 64, 1), g, dtype=np.uint8))
    out = floyd_steinberg(img)
    assert abs(out.data.astype(np.float64).mean() - g) <= 2.0


def test_determinism():
    rng = np.random.default_rng(4)
    img = Image.from_array(rng.integers(0, 256, size=(31, 23, 1), dtype=np.uint8))
    a = floyd_steinberg(img)
    b = floyd_steinberg(img)
    assert np.array_equal(a.data, b.data)


def test_channels_independent():
    rng = np.random.default_rng(5)
    arr = rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8)
    whole = floyd_steinberg(Image.from_array(arr))
    for c in range(3):
        single = floyd_steinberg(Image.from_array(arr[:, :, c : c + 1]))
        assert np.array_equal(whole.data[:, :, c : c + 1], single.data)


def test_requires_eight_bit_input():
    img = Image.from_array(np.zeros((4, 4, 1), dtype=np.uint8), bit_depth=4)
    with pytest.raises(ParameterError):
        floyd_steinberg(img)


def test_error_diffusion_improves_over_threshold():
    """Error diffusion tracks local means where plain thresholding cannot."""
    ramp = np.tile(np.linspace(90, 165, 32, dtype=np.uint8), (32, 1))
    img = Image.from_array(ramp[:, :, None])
    dithered = floyd_steinberg(img).data.astype(np.float64)
    thresholded = np.where(ramp >= 128, 255.0, 0.0)
    err_dither = abs(dithered.mean() - ramp.mean())
    err_threshold = abs(thresholded.mean() - ramp.mean())
    assert err_dither < err_threshold
