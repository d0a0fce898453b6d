import numpy as np
import pytest

from corrsr import synthetic


@pytest.fixture(scope="session")
def scene_256():
    return synthetic.textured_scene(1, (256, 256))


@pytest.fixture(scope="session")
def scene_128():
    return synthetic.textured_scene(7, (128, 128))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
