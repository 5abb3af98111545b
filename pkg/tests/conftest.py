import numpy as np
import pytest

from attitude_rta.harness import SampleRanges, sample_safe_initial
from attitude_rta.params import SpacecraftParams


@pytest.fixture(scope="session")
def p():
    return SpacecraftParams()


@pytest.fixture(scope="session")
def safe_states(p):
    """A fixed pool of buffered-safe states shared by the derivative tests."""
    ranges = SampleRanges.default(p)
    return [sample_safe_initial(ranges, p, seed=1000 + i).as_vector() for i in range(100)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
