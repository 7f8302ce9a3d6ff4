"""Shared fixtures and the acceptance-criteria summary hook."""

import pytest
import torch

torch.set_num_threads(1)

_CRITERION_LINES = []


@pytest.fixture(scope="session")
def criterion_report():
    """Record one pass/fail line per acceptance criterion.

    Lines are echoed immediately and repeated in a terminal summary section so
    the full scorecard survives output capture.
    """
    def record(num: int, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {num}: {detail}"
        _CRITERION_LINES.append(line)
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERION_LINES, key=_criterion_key):
            terminalreporter.write_line(line)


def _criterion_key(line: str) -> int:
    try:
        return int(line.split("criterion")[1].split(":")[0])
    except (IndexError, ValueError):
        return 99
