import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from stopgrid import ModelParams, solve_sequence  # noqa: E402


@pytest.fixture(scope="session")
def fig3_params():
    return ModelParams.from_total_learning(-1.0, 1.0, 4.0, 0.1, 10, 1.0)


@pytest.fixture(scope="session")
def fig3(fig3_params):
    return solve_sequence(fig3_params)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
