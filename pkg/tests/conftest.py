import numpy as np
import pytest

from nsfarfield import core


@pytest.fixture(params=sorted(core.backends()))
def backend(request):
    return core.backends()[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# filled by the acceptance tests, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
