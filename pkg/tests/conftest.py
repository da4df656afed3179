import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    prev = _results.get(number)
    if prev is None or prev[1]:  # keep the first failure
        _results[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, ok, detail = _results[number]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
