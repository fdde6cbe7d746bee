import numpy as np
import pytest

from profilebench.toy import make_toy_model


@pytest.fixture(scope="session")
def toy():
    return make_toy_model(0)


@pytest.fixture(scope="session")
def toys():
    return [make_toy_model(s) for s in range(3)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
