import io

import pytest

from offsetlag import trace_analysis as ta

# (criterion, passed, detail) lines collected by the acceptance module
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda x: _order(x[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}")


def _order(name: str):
    head = "".join(ch for ch in name if ch.isdigit())
    return (int(head or 0), name)


def trace_events(trace):
    """Round-trip a SimTrace through its JSONL form."""
    buf = io.StringIO()
    trace.write_jsonl(buf)
    buf.seek(0)
    return ta.read_trace(buf)


@pytest.fixture
def events_of():
    return trace_events
