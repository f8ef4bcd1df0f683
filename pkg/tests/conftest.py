import time

import pytest

from gfm3ph.scenarios import ScenarioConfig, ks_sweep, slg_fault_study, unbalanced_load_config


@pytest.fixture(scope="session")
def fault_generalized():
    start = time.perf_counter()
    record, summary = slg_fault_study(controller="generalized")
    return record, summary, time.perf_counter() - start


@pytest.fixture(scope="session")
def fault_standard():
    record, summary = slg_fault_study(controller="standard")
    return record, summary


@pytest.fixture(scope="session")
def sweep_rows():
    return ks_sweep(unbalanced_load_config(ScenarioConfig()))


_CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Print and remember one PASS/FAIL line per acceptance criterion."""
    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
