import numpy as np
import pytest

from schloegl import (
    SchloeglParams,
    build_actuator_grid,
    build_fem,
    discretize_actuators,
)


@pytest.fixture(scope="session")
def fe16():
    return build_fem(16, 16, 0.1)


@pytest.fixture(scope="session")
def params():
    return SchloeglParams(nu=0.1, roots=(-1.0, 0.0, 2.0))


@pytest.fixture(scope="session")
def coupling16(fe16):
    grid = build_actuator_grid(3, 0.5)
    return discretize_actuators(grid, fe16.mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
