import warnings

import numpy as np
import pytest

from sphnodal import ensemble, geometry


@pytest.fixture(scope="session")
def mesh_level5():
    return geometry.icosphere(5)


@pytest.fixture(scope="session")
def mesh_level6():
    return geometry.icosphere(6)


@pytest.fixture(scope="session")
def basis20():
    return ensemble.HarmonicBasis(20)


@pytest.fixture(scope="session")
def basis20_on_level5(mesh_level5, basis20):
    return ensemble.eval_basis_many(basis20, mesh_level5.vertices)


@pytest.fixture(autouse=True)
def _quiet_mesh_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="mesh edges.*")
        yield


def unit_points(rng: np.random.Generator, count: int, dim: int = 3) -> np.ndarray:
    x = rng.standard_normal((count, dim))
    return x / np.linalg.norm(x, axis=1)[:, None]
