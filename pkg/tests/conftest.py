import pytest

from echodiet.signal_core import SensingConfig


@pytest.fixture(scope="session")
def cfg():
    return SensingConfig()


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
