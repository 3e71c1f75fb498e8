import numpy as np
import pytest

from pamlab.kernels import CovarianceSpec, Measure
from pamlab.noise import SpaceTimeGrid
from pamlab.streams import SeedStreams


@pytest.fixture
def streams():
    return SeedStreams(20250808)


@pytest.fixture
def gaussian_bump():
    return CovarianceSpec.gaussian_bump(dim=1)


@pytest.fixture
def small_grid():
    # period 25.6, fine enough for horizons up to ~1
    return SpaceTimeGrid(dim=1, points_per_axis=256, spacing=0.1,
                         time_step=0.01, horizon=1.0)


@pytest.fixture
def dirac():
    return Measure.dirac(0.0)


def assert_close(actual, expected, rtol=0.0, atol=0.0):
    np.testing.assert_allclose(actual, expected, rtol=rtol, atol=atol)
