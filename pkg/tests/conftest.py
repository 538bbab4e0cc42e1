import pathlib
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

TESTS_DIR = pathlib.Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS_DIR))

REPO_ROOT = TESTS_DIR.parent
MATRIX_DIR = REPO_ROOT / "data" / "vardial2017"

settings.register_profile(
    "default",
    max_examples=100,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def matrix_dir():
    return MATRIX_DIR
