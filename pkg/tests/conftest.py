import numpy as np
import pytest

from celloed.params import default_cell_parameters


@pytest.fixture(scope="session")
def params():
    return default_cell_parameters()


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def random_admissible_currents(rng, n, i_max=150.0):
    """Zero-mean-ish random profile that stays well inside the SoC window."""
    cur = rng.uniform(-i_max, i_max, n)
    return cur - cur.mean() * 0.5
