import pytest

_results: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")


@pytest.fixture
def detail(request):
    """Tests append measured values here; they end up on the criterion's summary line."""
    notes: list[str] = []
    request.node.criterion_notes = notes
    return notes


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    n, title = m.args
    failed = rep.failed
    if rep.when == "call" or (failed and n not in _results):
        notes = "; ".join(getattr(item, "criterion_notes", []))
        _results[n] = ("FAIL" if failed else "PASS", title, notes)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, title, notes = _results[n]
        line = f"criterion {n} {status}: {title}"
        if notes:
            line += f" [{notes}]"
        terminalreporter.write_line(line)
