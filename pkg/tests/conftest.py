import numpy as np
import pytest

from tprnn import kernels
from tprnn.tensor import clear_tape


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels once so per-test timings stay honest."""
    kernels.warmup()


@pytest.fixture(autouse=True)
def fresh_tape():
    clear_tape()
    yield
    clear_tape()


@pytest.fixture
def rng():
    return np.random.default_rng(42)
