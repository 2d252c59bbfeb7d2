import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from evrebalance.generator import GeneratorConfig, generate_instance, illustrative_instance, tiny_instance

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def illustrative():
    return illustrative_instance(capacity=3, seed=1)


@pytest.fixture
def small_generated():
    return generate_instance(GeneratorConfig(10, seed=3))


@pytest.fixture(params=range(6))
def tiny(request):
    return tiny_instance(request.param)


def two_node_instance():
    """Two nodes, one level, a server must sit at node 0 and the vehicle starts at node 1."""
    from evrebalance.instance import Instance

    return Instance(
        node_count=2,
        travel_time=np.array([[0.0, 10.0], [10.0, 0.0]]),
        levels=1,
        stations=(),
        arrival_rate=np.array([[2.0], [1.0]]),
        idle_stock=np.array([[0], [1]]),
        theta=0.2,
        charging_arc_cost=10.0,
        spatial_arcs=((0, 1), (1, 0)),
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
