import pytest

_criteria: dict[int, list[tuple[bool, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _criteria.setdefault(int(marker.args[0]), []).append((report.outcome == "passed", detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status = "PASS" if all(ok for ok, _ in _criteria[n]) else "FAIL"
        details = "; ".join(d for _, d in _criteria[n] if d)
        terminalreporter.write_line(f"CRITERION {n}: {status}" + (f"  ({details})" if details else ""))
