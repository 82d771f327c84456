import numpy as np
import pytest

from smoothmc.rng import Rng

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return Rng(20240601)


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_report():
    def record(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {title} {detail}".rstrip())
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
