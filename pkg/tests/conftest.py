import math

import pytest

from shrinkerlab import meshes

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def sphere4():
    return meshes.icosphere(2.0, 4)


@pytest.fixture(scope="session")
def sphere3():
    return meshes.icosphere(2.0, 3)


@pytest.fixture(scope="session")
def unit_sphere4():
    return meshes.icosphere(1.0, 4)


@pytest.fixture(scope="session")
def tube():
    return meshes.tube(math.sqrt(2.0), 64, 8.0)


@pytest.fixture(scope="session")
def disk():
    return meshes.disk(20.0, 40)


@pytest.fixture(scope="session")
def torus():
    return meshes.torus(2.0, 1.0, 48, 24)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
