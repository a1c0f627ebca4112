import warnings

import numpy as np
import pytest

from caom.grid import Field1D, Field2D, Grid2D
from caom.stochastic import OUStabilityWarning


@pytest.fixture(autouse=True)
def _quiet_ou_bias_warning():
    # default dt deliberately exceeds 1/lambda_max of the highest OU modes;
    # the flag is asserted explicitly where it matters
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OUStabilityWarning)
        yield


@pytest.fixture
def grid16():
    return Grid2D(16, 16)


@pytest.fixture
def grid32():
    return Grid2D(32, 32)


def rng_named(label: str, index: int = 0) -> np.random.Generator:
    from caom.seeding import make_generator

    return make_generator(0xC0FFEE, label, index)


def random_psi(grid: Grid2D, rng: np.random.Generator) -> Field2D:
    vals = rng.standard_normal(grid.shape)
    vals[0, :] = vals[-1, :] = 0.0
    vals[:, 0] = vals[:, -1] = 0.0
    return Field2D(grid, vals)


def zeros2(grid: Grid2D) -> Field2D:
    return Field2D(grid, np.zeros(grid.shape))


def zeros1(n: int) -> Field1D:
    return Field1D(np.zeros(n + 1))
