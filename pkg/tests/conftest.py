import numpy as np
import pytest

from eralign.data import Domain, FeatureMatrix
from eralign.subspace import Subspace
from eralign.util import make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


def random_subspace(rng, ambient, dim, mean=None):
    q, _ = np.linalg.qr(rng.normal(size=(ambient, dim)))
    eig = np.sort(rng.uniform(0.5, 2.0, dim))[::-1]
    return Subspace(mean=np.zeros(ambient) if mean is None else mean,
                    basis=q, eigenvalues=eig)


def labeled_matrix(rows, labels, domain=Domain.SOURCE):
    return FeatureMatrix.create(np.asarray(rows, dtype=np.float64),
                                domain=domain, labels=labels)
