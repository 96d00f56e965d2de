import pytest

from g2lab.hodge_green import SolverConfig
from g2lab.torus_field import Grid, flat_field, perturbed_field, random_exact_3form


@pytest.fixture(scope="session")
def grid16():
    return Grid((16, 16, 1, 1, 1, 1, 1))


@pytest.fixture(scope="session")
def grid8():
    return Grid((8, 8, 1, 1, 1, 1, 1))


@pytest.fixture(scope="session")
def field16(grid16):
    return perturbed_field(grid16, 1, 0.05)


@pytest.fixture(scope="session")
def field8(grid8):
    return perturbed_field(grid8, 1, 0.05)


@pytest.fixture(scope="session")
def flat16(grid16):
    return flat_field(grid16)


@pytest.fixture(scope="session")
def tight():
    return SolverConfig(rel_tol=1e-12, max_iter=1000)


@pytest.fixture(scope="session")
def directions16(grid16):
    return [random_exact_3form(grid16, 10 + k, 2) for k in range(3)]
