import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils.series_utils import TimeSeries, write_series  # noqa: E402
from utils.trawl_utils import normalized_seed, parse_trawl  # noqa: E402


@pytest.fixture
def exp_trawl():
    return parse_trawl({"kind": "exp", "lambda": 1.0})


@pytest.fixture
def supgamma_trawl():
    return parse_trawl({"kind": "supgamma", "alpha": 0.1, "H": 1.5})


@pytest.fixture
def nb_seed():
    return normalized_seed("negbin", theta=0.2)


@pytest.fixture
def gaussian_seed():
    return normalized_seed("gaussian", mu=0.8)


@pytest.fixture
def toy_series():
    """X = (1, 2, 0, 1) on a unit grid."""
    return TimeSeries(1.0, np.array([1.0, 2.0, 0.0, 1.0]))


@pytest.fixture
def white_noise():
    rng = np.random.default_rng(12345)
    return TimeSeries(0.1, rng.standard_normal(600))


@pytest.fixture
def series_file(tmp_path):
    """Write a TimeSeries to a CSV file and return its path."""
    def write(series, name='series.csv'):
        path = tmp_path / name
        write_series(series, path)
        return str(path)
    return write
