import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hire.data import RatingGraph

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_graph() -> RatingGraph:
    """Three users, three items, two attribute slots each.

    u0 rated i1; u1 rated i0 and i1; u2 rated i1 and i2.
    """
    ratings = {(0, 1): 4.0, (1, 0): 3.0, (1, 1): 5.0, (2, 1): 2.0, (2, 2): 1.0}
    return RatingGraph(
        ["u1", "u2", "u3"], ["i1", "i2", "i3"],
        np.array([[0, 1], [1, 0], [1, 1]]), np.array([[0, 0], [1, 1], [2, 0]]),
        (2, 2), (3, 2), ratings, 5, ("a", "b"), ("c", "d"),
    )


@pytest.fixture
def graph():
    return tiny_graph()


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
