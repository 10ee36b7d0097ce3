import numpy as np
import pytest

from boundinfer.generators import chain_network, diamond_network
from boundinfer.network import Evidence, Query




@pytest.fixture
def chain():
    return chain_network()


@pytest.fixture
def diamond():
    return diamond_network()


@pytest.fixture
def chain_problem(chain):
    return chain, Evidence({"B": "t"}), Query("A", "t")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
