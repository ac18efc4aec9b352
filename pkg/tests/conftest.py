import pytest

from fxinsure import table_config

OU_DEFAULTS = dict(alpha=-0.5, beta=0.3, m0=0.2)


@pytest.fixture
def t1_ou():
    return table_config(1, "ou", **OU_DEFAULTS)


@pytest.fixture
def t1_gbm():
    return table_config(1, "gbm")


@pytest.fixture
def t1_dom():
    return table_config(1, "domestic")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
