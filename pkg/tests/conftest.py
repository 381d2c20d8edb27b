import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `helpers` importable

_acceptance_results: dict[str, str] = {}

_TAG_RE = re.compile(r"::test_([ps]\d+)_")


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    m = _TAG_RE.search(report.nodeid)
    if m:
        tag = m.group(1).upper()
        # a criterion may have several test functions; any failure fails it
        previous = _acceptance_results.get(tag)
        outcome = report.outcome if previous in (None, "passed") else previous
        _acceptance_results[tag] = outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(_acceptance_results):
        status = "PASS" if _acceptance_results[tag] == "passed" else "FAIL"
        terminalreporter.write_line(f"{tag}: {status}")


@pytest.fixture
def rig():
    from helpers import make_rig

    return make_rig()
