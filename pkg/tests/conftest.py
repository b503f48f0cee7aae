from __future__ import annotations

from pathlib import Path

import pytest

from sqlmockgen.schema import load_schemas

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def fixture_schemas(*names: str):
    return load_schemas([FIXTURES / f"{n}.schema" for n in names])


@pytest.fixture
def balance():
    return fixture_schemas("balance"), fixture_text("balance_function.sql")


@pytest.fixture
def sales():
    return fixture_schemas("sales"), fixture_text("sales_join.sql")


@pytest.fixture
def quarterly():
    return fixture_schemas("quarterly"), fixture_text("quarterly.sql")


@pytest.fixture
def tasks():
    return fixture_schemas("tasks"), fixture_text("tasks_golden.sql")


@pytest.fixture
def wide72():
    return fixture_schemas("wide72"), fixture_text("wide72_query.sql")


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)
