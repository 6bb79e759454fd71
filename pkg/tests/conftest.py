"""Collects outcomes of tests marked ``criterion(n, title)`` and prints one PASS/FAIL line per criterion."""
import pytest

_results: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _results.setdefault(m.args[0], {"title": m.args[1], "outcomes": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _results[m.args[0]]["outcomes"].append((item.name, rep.passed, rep.skipped))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        runs = entry["outcomes"]
        if not runs or all(s for _, _, s in runs):
            status = "SKIP"
        else:
            status = "PASS" if all(p for _, p, s in runs if not s) else "FAIL"
        failed = [name for name, p, s in runs if not p and not s]
        detail = f"  (failed: {', '.join(failed)})" if failed else ""
        tr.write_line(f"{status} criterion {number}: {entry['title']}{detail}")
