import math

import numpy as np
import pytest
from hypothesis import settings

from semantic_jscc import DiscreteSemanticSource, GaussianSourceSpec

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

HAMMING2 = np.array([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture(scope="session")
def toy_source():
    """Ternary semantic variable seen through a binary observation."""
    ps = np.array([[2 / 3, 1 / 3, 0.0], [1 / 9, 1 / 3, 5 / 9]])
    return DiscreteSemanticSource([0.4, 0.6], ps, 1 - np.eye(3), HAMMING2)


@pytest.fixture(scope="session")
def bsc03():
    return np.array([[0.7, 0.3], [0.3, 0.7]])


@pytest.fixture(scope="session")
def baseline_gaussian():
    return GaussianSourceSpec.isotropic(1, 1, 4.0, 1.0, math.sqrt(0.5))


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acceptance_log.LINES):
            terminalreporter.write_line(acceptance_log.LINES[n])
