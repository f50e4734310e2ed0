import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    cid, title = marker.args
    detail = getattr(item, "criterion_detail", "")
    if report.failed or report.when == "call":
        prev = _criteria.get(cid)
        passed = report.passed and (prev is None or prev[1])
        _criteria[cid] = (title, passed, detail)


@pytest.fixture
def record(request):
    """Attach a one-line measurement summary to the acceptance line of this test."""

    def _record(text):
        request.node.criterion_detail = text

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_criteria):
        title, passed, detail = _criteria[cid]
        line = f"{cid} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
