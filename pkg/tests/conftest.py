import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lossyalloc.graph import GraphModelSpec, assign_weights, generate

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def er20():
    """The pinned 20-node instance used by the replication recipe (56 links)."""
    return assign_weights(generate(GraphModelSpec("er", {"n": 20, "p": 0.3}, seed=33)), 0, 10, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
