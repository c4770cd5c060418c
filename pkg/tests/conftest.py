import numpy as np
import pytest

from core.measures import ParamSpace, make_measure
from core.mixtures import LikelihoodFamily


@pytest.fixture
def unit_interval():
    return ParamSpace.interval(0.0, 1.0)


@pytest.fixture
def sym_interval():
    return ParamSpace.interval(-1.0, 1.0)


@pytest.fixture
def wide_interval():
    return ParamSpace.interval(-3.0, 3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gaussian():
    return LikelihoodFamily.gaussian()


@pytest.fixture
def laplace():
    return LikelihoodFamily.laplace()


@pytest.fixture
def two_point_pair(unit_interval):
    """0.3δ₀ + 0.7δ₁ y 0.6δ₀ + 0.4δ₁ en [0, 1]."""
    G = make_measure([0.0, 1.0], [0.3, 0.7], unit_interval)
    Gp = make_measure([0.0, 1.0], [0.6, 0.4], unit_interval)
    return G, Gp


def random_measure(space, rng, max_atoms=4):
    k = int(rng.integers(1, max_atoms + 1))
    atoms = rng.uniform(space.lower, space.upper, size=(k, space.dim))
    return make_measure(atoms, rng.dirichlet(np.ones(k)), space)
