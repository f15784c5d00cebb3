import pytest

from aoicodesign.aoi import AgentSpec
from aoicodesign.costs import PowerAoiCost

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def linear_agent():
    """J = age, tau = 1, r = 1, zero wait, so Delta = 2."""
    return AgentSpec(id=0, tau_set=(1,), tx_len={1: 1}, cost=PowerAoiCost(1.0), delta_wait=0)
