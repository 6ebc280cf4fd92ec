import numpy as np
import pytest

from gapfill.model import MagneticLattice, assemble_bulk, build_gauge
from gapfill.spectral import eigensolve


@pytest.fixture(scope="session")
def torus_reports():
    """Cache of full torus eigensolves keyed by (k, q, cells); shared across tests."""
    cache = {}

    def get(k, q, cells=4, cluster_tol=None, keep_vectors=False):
        key = (k, q, cells, cluster_tol, keep_vectors)
        if key not in cache:
            lat = MagneticLattice(k, q, cells, cells, "torus")
            op = assemble_bulk(lat, build_gauge(lat))
            cache[key] = eigensolve(op, cluster_tol=cluster_tol,
                                    keep_vectors=keep_vectors)
        return cache[key]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
