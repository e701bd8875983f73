"""Shared pytest wiring.

The acceptance tests each record a short line of measured numbers; a
terminal-summary hook prints one pass/fail line per criterion after the
normal output, so the end-to-end verdicts are readable without digging
through the -v listing.
"""

import pytest

_PREFIX = "test_acceptance.py::test_criterion_"


def pytest_configure(config):
    config._acceptance_details = {}


@pytest.fixture
def acceptance_line(request):
    """Record the measured numbers behind one acceptance verdict."""

    def record(number: int, text: str) -> None:
        request.config._acceptance_details[number] = text

    return record


def _criterion_number(nodeid: str):
    if _PREFIX not in nodeid:
        return None
    head = nodeid.split(_PREFIX, 1)[1].split("_", 1)[0]
    return int(head) if head.isdigit() else None


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = {}
    for status, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            number = _criterion_number(getattr(report, "nodeid", ""))
            if number is None:
                continue
            if label == "FAIL" or number not in verdicts:
                verdicts[number] = label
    if not verdicts:
        return
    details = getattr(config, "_acceptance_details", {})
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        line = f"criterion {number}: {verdicts[number]}"
        if verdicts[number] == "PASS" and number in details:
            line += f"  ({details[number]})"
        terminalreporter.write_line(line)
