import numpy as np
import pytest

from retone.corpus import make_corpus
from retone.image_io import Image


@pytest.fixture(scope="session")
def color_train_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus") / "color_train"
    make_corpus(d, 200, size=128, channels=3, seed=1001)
    return d


@pytest.fixture(scope="session")
def color_eval_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus") / "color_eval"
    make_corpus(d, 20, size=128, channels=3, seed=2002)
    return d


@pytest.fixture(scope="session")
def gray_train_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus") / "gray_train"
    make_corpus(d, 200, size=128, channels=1, seed=3003)
    return d


@pytest.fixture(scope="session")
def gray_eval_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus") / "gray_eval"
    make_corpus(d, 15, size=128, channels=1, seed=4004)
    return d


@pytest.fixture(scope="session")
def tiny_corpus_dir(tmp_path_factory):
    """Small, fast corpus for plumbing tests."""
    d = tmp_path_factory.mktemp("corpus") / "tiny"
    make_corpus(d, 8, size=48, channels=3, seed=5005)
    return d


def random_image(rng: np.random.Generator, h: int = 32, w: int = 32, c: int = 1) -> Image:
    return Image.from_array(rng.integers(0, 256, size=(h, w, c), dtype=np.uint8).astype(np.uint8))
