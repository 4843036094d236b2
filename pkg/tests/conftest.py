from pathlib import Path

import pytest
from hypothesis import settings

from orgminer.logio import read_log

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def table2_path():
    return FIXTURES / "table2.csv"


@pytest.fixture
def table2(table2_path):
    return read_log(table2_path)


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
