import numpy as np
import pytest

from qsdsynth.plant import PlantSpec
from qsdsynth.synthesis import run_algorithm1

REFERENCE_K = np.array([[0.5529, -2.1873, 0.0]])
REFERENCE_P = np.array([
    [2.5432, 0.0046, 0.0009],
    [0.0046, 2.5432, -0.0007],
    [0.0009, -0.0007, 0.4916],
])


def rotation_plant(delta=1.0, period=0.5):
    return PlantSpec([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [1.0]], [delta], period)


@pytest.fixture(scope="session")
def plant():
    return rotation_plant()


@pytest.fixture(scope="session")
def synthesized(plant):
    """Algorithm 1 on the rotation plant, shared across test modules."""
    return run_algorithm1(plant, epsilon=1e-4, k_max=200)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
