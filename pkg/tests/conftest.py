"""Shared pytest hooks: one pass/fail line per acceptance criterion in the summary."""

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if not name.startswith("test_criterion_"):
        return
    number = int(name.split("_")[2])
    detail = dict(report.user_properties).get("detail", "")
    _CRITERIA[number] = (report.outcome.upper(), name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        outcome, name, detail = _CRITERIA[number]
        status = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {name}  {detail}")
