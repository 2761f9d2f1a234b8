import pytest

_results: dict[str, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance criterion this test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results.setdefault(marker.args[0], []).append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_results, key=lambda s: (int(s.split(".")[0]), s)):
        checks = _results[label]
        ok = all(outcome == "passed" for _, outcome in checks)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}")
        if not ok:
            for name, outcome in checks:
                if outcome != "passed":
                    terminalreporter.write_line(f"        {outcome}: {name}")
