"""Shared pytest wiring: a per-criterion pass/fail summary for the acceptance suite.

Acceptance tests mark themselves with ``@pytest.mark.criterion(number, "label")``
and may register short measurement strings through :func:`record_detail`.  The
terminal summary then prints exactly one line per criterion, in order.
"""

from __future__ import annotations

import pytest

# criterion number -> {"label": str, "passed": bool, "details": [str, ...]}
_RESULTS: dict[int, dict] = {}
# free-form measurement notes, keyed by criterion number
_DETAILS: dict[int, list[str]] = {}


def record_detail(number: int, text: str) -> None:
    """Attach a short measurement note to one criterion's summary line."""
    _DETAILS.setdefault(number, []).append(text)


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(number, label): tag a test as one numbered acceptance check",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number = int(marker.args[0])
    label = str(marker.args[1]) if len(marker.args) > 1 else item.name
    entry = _RESULTS.setdefault(number, {"label": label, "passed": True})
    if report.failed or (report.skipped and report.when == "call"):
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "PASS" if entry["passed"] else "FAIL"
        notes = "; ".join(_DETAILS.get(number, []))
        suffix = f"  [{notes}]" if notes else ""
        tr.write_line(f"criterion {number:2d} {status}  {entry['label']}{suffix}")
