import numpy as np
import pytest

from . import acceptance_log


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    ran = {
        int(rep.nodeid.split("criterion_")[1].split("_")[0])
        for key in ("passed", "failed", "error")
        for rep in terminalreporter.stats.get(key, [])
        if "test_acceptance.py" in rep.nodeid and "criterion_" in rep.nodeid
    }
    if ran:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.summary(ran):
            terminalreporter.write_line(line)
