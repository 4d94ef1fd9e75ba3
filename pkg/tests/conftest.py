"""Collects per-criterion outcomes from tests marked ``criterion`` and prints a summary."""

import pytest

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, description): acceptance criterion covered by the test")


def pytest_collection_modifyitems(session, config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, desc = mark.args
            _results.setdefault(number, {"desc": desc, "outcomes": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    # a failing setup never reaches the call phase, so record it there
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results[mark.args[0]]["outcomes"].append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        outcomes = entry["outcomes"]
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for _, o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        failed = [name for name, o in outcomes if o != "passed"]
        suffix = f"  (failing: {', '.join(failed)})" if failed else ""
        tr.write_line(f"criterion {number}: {status} - {entry['desc']}{suffix}")
