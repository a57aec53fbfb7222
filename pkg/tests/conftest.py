from __future__ import annotations

from pathlib import Path

import pytest

from capsula.curator import curate
from capsula.minilang import Sandbox, execute_script, parse_script

FIXTURES = Path(__file__).parent / "fixtures"
MESSY_DIR = FIXTURES / "messy"
MESSY = MESSY_DIR / "messy.ms"
FIGURES = ["fig1_biplot_v2.png", "fig2_biplot.png"]


@pytest.fixture(scope="session")
def messy_script():
    return parse_script(MESSY.read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def messy_trace(messy_script):
    return execute_script(messy_script, Sandbox(MESSY_DIR))


@pytest.fixture(scope="session")
def messy_results(messy_script, messy_trace):
    return curate(messy_script, Sandbox(MESSY_DIR), FIGURES, trace=messy_trace)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
