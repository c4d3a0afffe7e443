import json
from pathlib import Path

import numpy as np
import pytest

from curvlab.catalog import (
    bump_metric, minkowski_slice, perturbed_minkowski_slice, schwarzschild_slice,
    traceless_test_tensor,
)
from curvlab.fields import Grid3

BASELINES = json.loads((Path(__file__).parent / "baselines.json").read_text())


@pytest.fixture(scope="session")
def periodic_grid_32():
    return Grid3((32, 32, 32), 2 * np.pi / 32)


@pytest.fixture(scope="session")
def flat_metric_32(periodic_grid_32):
    m, k, n = minkowski_slice(periodic_grid_32)
    return m


@pytest.fixture(scope="session")
def schwarzschild_box():
    """24^3 off-center box around r ~ 10-17, horizon excluded."""
    grid = Grid3((24, 24, 24), 4.0 / 23, origin=(6.0, 6.0, 6.0),
                 boundary="asymptotic-dirichlet")
    return schwarzschild_slice(grid, 1.0)


def grid_pair(n_lo, n_hi, origin=(6.0, 6.0, 6.0), extent=4.0):
    lo = Grid3((n_lo,) * 3, extent / (n_lo - 1), origin=origin,
               boundary="asymptotic-dirichlet")
    hi = Grid3((n_hi,) * 3, extent / (n_hi - 1), origin=origin,
               boundary="asymptotic-dirichlet")
    return lo, hi


def measured_order(err_lo, err_hi, h_lo, h_hi):
    return float(np.log(err_lo / err_hi) / np.log(h_lo / h_hi))
