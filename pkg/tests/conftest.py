import numpy as np
import pytest

from spde_reduce.field import Grid1D


@pytest.fixture
def dirichlet_grid():
    return Grid1D(0.0, 1.0, 65, "dirichlet")


@pytest.fixture
def periodic_grid():
    return Grid1D(0.0, 2 * np.pi, 64, "periodic")


@pytest.fixture
def neumann_grid():
    return Grid1D(0.0, 2.0, 129, "neumann")
