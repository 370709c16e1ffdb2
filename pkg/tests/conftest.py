import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture
def running():
    from modex.simplex_dist import CourtroomParams
    return CourtroomParams(np.array([2.0, 1.0]), np.array([0.5, 0.5]), np.array([1.0, 2.0]))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        def key(line):
            num, sub = re.search(r"criterion (\d+)(\w*)", line).groups()
            return int(num), sub
        for line in sorted(ACCEPTANCE_LINES, key=key):
            terminalreporter.write_line(line)
