import numpy as np
import pytest

from geoperturb import rng
from geoperturb.population import Block, BlockTable


@pytest.fixture(scope="session")
def huge_uniform():
    """One 200 km x 200 km block at 0.005 households / m^2 centred on the origin."""
    def make(density=0.005, half=1e5):
        area = (2 * half) ** 2
        return BlockTable([Block("all", -half, -half, half, half, density * area)])
    return make


def same_point_batch(n, prefix="p"):
    """``n`` distinct ids all located at the origin."""
    return np.zeros((n, 2)), rng.id_keys([f"{prefix}{i}" for i in range(n)])


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_REPORT: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_REPORT, key=lambda s: int(s.split()[0][3:-1])):
            terminalreporter.write_line(line)
