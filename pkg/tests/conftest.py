import numpy as np
import pytest

from fbmcmimo.fbmc import design_phydyas


@pytest.fixture(scope="session")
def filt64():
    return design_phydyas(64, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
