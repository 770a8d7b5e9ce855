import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from quantfield.estimator import Sample


def make_fixture(seed, n=50, d=2, noise=0.3):
    """A smooth synthetic regression sample plus a query point inside the data."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    y = np.sin(2.0 * X[:, 0]) + 0.5 * X.sum(axis=1) + noise * rng.standard_normal(n)
    x0 = X[rng.integers(n)] + 0.05 * rng.standard_normal(d)
    return Sample(X, y), x0


@pytest.fixture
def smooth_sample():
    return make_fixture(7, n=50, d=2)
