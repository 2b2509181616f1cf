import random

import pytest

from lfmroute.topology import Link, Topology, load_topology

TRIANGLE = """\
node 0
node 1
node 2
link 0 1 10e6
link 0 2 10e6
link 1 2 10e6
"""

MBPS = 1e6


@pytest.fixture
def triangle():
    return load_topology(TRIANGLE)


@pytest.fixture
def path3():
    return Topology.build(range(3), [Link(0, 1, 10e6), Link(1, 2, 10e6)])


@pytest.fixture
def rng():
    return random.Random(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2])):
            terminalreporter.write_line(line)
