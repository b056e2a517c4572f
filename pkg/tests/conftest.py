import json
from pathlib import Path

import pytest

from evmvuln.asm import assemble

FIXTURES = Path(__file__).parent / "fixtures"


def withdraw_code() -> bytes:
    return assemble((FIXTURES / "withdraw.asm").read_text())


def result_tables() -> dict:
    return json.loads((FIXTURES / "result_tables.json").read_text())


@pytest.fixture
def withdraw() -> bytes:
    return withdraw_code()


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
