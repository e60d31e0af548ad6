import re
import sys

_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, after the test run."""
    rows = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", "call") != "call" and outcome != "error":
                continue
            m = _CRITERION.search(report.nodeid)
            if m:
                n = int(m.group(1))
                rows[n] = rows.get(n, True) and outcome == "passed"
    if not rows:
        return
    details = {}
    for name, module in sys.modules.items():
        if name.rpartition(".")[2] == "test_acceptance":
            details = getattr(module, "DETAILS", {})
            break
    terminalreporter.section("acceptance criteria")
    for n in sorted(rows):
        verdict = "PASS" if rows[n] else "FAIL"
        suffix = f" - {details[n]}" if n in details else ""
        terminalreporter.write_line(f"CRITERION {n:2d}: {verdict}{suffix}")
