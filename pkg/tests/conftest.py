import numpy as np
import pytest

from trunet.engine import Enhancer
from trunet.graph import TrunetConfig, build, random_init


@pytest.fixture(scope="session")
def store():
    return random_init(0)


@pytest.fixture(scope="session")
def network(store):
    return build(TrunetConfig(), store)


@pytest.fixture(scope="session")
def enhancer(network):
    return Enhancer(network)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
