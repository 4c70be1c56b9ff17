"""Collects acceptance-criterion outcomes and prints one verdict line per criterion."""
import pytest

_results: dict = {}
_optional: set = set()


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("ac")
        if mark is not None:
            n = mark.args[0]
            _results.setdefault(n, [])
            if mark.kwargs.get("optional"):
                _optional.add(n)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("ac")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _results[mark.args[0]].append("skipped" if report.skipped else ("passed" if report.passed else "failed"))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        states = _results[n]
        if not states:
            continue
        if "failed" in states:
            verdict = "FAIL"
        elif "passed" in states:
            verdict = "PASS"
        else:
            verdict = "SKIP"
        note = " (optional, non-gating)" if n in _optional else ""
        terminalreporter.write_line(f"AC{n} {verdict}{note}")
