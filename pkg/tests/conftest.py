import numpy as np
import pytest

from doublephase.mesh import build_mesh
from doublephase.reconstruct import gaussian_bump  # noqa: F401 (re-export)


@pytest.fixture(scope="session")
def mesh16():
    return build_mesh(16, 16)


@pytest.fixture(scope="session")
def mesh32():
    return build_mesh(32, 32)


@pytest.fixture(scope="session")
def mesh64():
    return build_mesh(64, 64)


@pytest.fixture(scope="session")
def bump64(mesh64):
    return gaussian_bump(mesh64)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
