"""Terminal summary for the acceptance battery.

The tests in test_acceptance.py are numbered criteria; after a run this
hook prints one PASS/FAIL line per criterion so the battery's outcome can
be read at a glance regardless of verbosity settings.
"""

import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            match = _CRITERION.search(report.nodeid)
            if match is None:
                continue
            if status == "passed" and report.when != "call":
                continue
            number, slug = match.groups()
            verdict = "PASS" if status == "passed" else "FAIL"
            # a failed setup or teardown overrides a passed call
            if outcomes.get(number, ("", "PASS"))[1] == "FAIL":
                continue
            outcomes[number] = (slug.replace("_", " "), verdict)
    if not outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(outcomes):
        slug, verdict = outcomes[number]
        terminalreporter.write_line(f"criterion {int(number):2d} ({slug}): {verdict}")
