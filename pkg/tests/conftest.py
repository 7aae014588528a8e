import pytest

from tailcausal.dag import Dag

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def chain2():
    return Dag.from_edges(2, [(1, 2)])


@pytest.fixture
def chain3():
    return Dag.from_edges(3, [(1, 2), (2, 3)])


@pytest.fixture
def diamond():
    return Dag.from_edges(4, [(1, 2), (1, 3), (2, 4), (3, 4)])


@pytest.fixture
def common_cause():
    return Dag.from_edges(3, [(3, 1), (3, 2)])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
