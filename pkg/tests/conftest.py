import numpy as np
import pytest

from riesne import DatasetTable, ManifoldDescriptor, use_backend
from riesne._backend import BACKENDS


def random_spd(rng, n, m, spread=1.0):
    a = rng.standard_normal((n, m, m)) * spread
    return a @ np.swapaxes(a, 1, 2) / m + 0.5 * np.eye(m)


def random_sphere(rng, n, ambient):
    x = rng.standard_normal((n, ambient))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_table(family, n, size, seed=0):
    """Random points on a manifold: R^size, the sphere in R^size, or SPD(size)."""
    rng = np.random.default_rng(seed)
    if family == "euclidean":
        return DatasetTable(rng.standard_normal((n, size)), ManifoldDescriptor.euclidean(size))
    if family == "sphere":
        return DatasetTable(random_sphere(rng, n, size), ManifoldDescriptor.sphere(size))
    return DatasetTable(random_spd(rng, n, size), ManifoldDescriptor.spd(size))


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    """Run the test once per available kernel backend."""
    with use_backend(request.param) as kernels:
        yield kernels
