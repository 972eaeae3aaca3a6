import pytest

_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    number, summary = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _outcomes[number] = ("PASS" if report.passed else "FAIL", summary, detail)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_outcomes):
        status, summary, detail = _outcomes[number]
        line = f"criterion {number:2d} {status}: {summary}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
