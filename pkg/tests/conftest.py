import numpy as np
import pytest

from chlu.checks import harmonic_model, random_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def harmonic():
    return harmonic_model(1)


@pytest.fixture
def small_model(rng):
    return random_model(rng, 2, hidden=[6])
