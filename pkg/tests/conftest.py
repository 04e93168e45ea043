import numpy as np
import pytest

from mtgcn.synth import toy_skeleton


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy():
    return toy_skeleton()
