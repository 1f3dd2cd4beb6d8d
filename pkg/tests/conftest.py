from collections import OrderedDict

import pytest

_ACCEPTANCE = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): test belongs to the named acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            state = "xpass" if report.passed else "xfail"
        else:
            state = report.outcome
        _ACCEPTANCE.setdefault(mark.args[0], []).append((item.name, state))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, results in _ACCEPTANCE.items():
        ok = all(state == "passed" for _, state in results)
        bad = [f"{test} ({state})" for test, state in results if state != "passed"]
        line = f"{'PASS' if ok else 'FAIL'}  {name}  [{len(results) - len(bad)}/{len(results)} checks]"
        if bad:
            line += "  not met: " + ", ".join(bad)
        tr.write_line(line)
