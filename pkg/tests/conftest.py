import sys

import pytest

from mitibench.harness import BenchConfig, run_benchmark


@pytest.fixture(scope="session")
def default_report():
    """Reference-model benchmark at seed 0, shared across modules (about half a second)."""
    return run_benchmark(BenchConfig(seed=0))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
