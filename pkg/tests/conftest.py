import sys

import numpy as np
import pytest

from fbmsync.paths import TimeGrid, sample_fbm


@pytest.fixture(scope="session")
def grid4096():
    return TimeGrid(0.0, 1.0, 4096)


@pytest.fixture(scope="session")
def fbm07(grid4096):
    return sample_fbm(0.7, grid4096, 1, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
