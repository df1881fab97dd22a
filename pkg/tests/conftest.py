import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import numpy as np
import pytest

from sair import Volume


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_volume(rng):
    return Volume(rng.random((8, 8, 8)))


@pytest.fixture
def smooth_volume(rng):
    """Band-limited unit-range volume; rotation round-trip bounds assume
    natural-image smoothness, which white noise does not have."""
    from scipy import ndimage

    data = ndimage.gaussian_filter(rng.random((48, 48, 48)), sigma=2.0)
    data -= data.min()
    data /= data.max()
    return Volume(data)
