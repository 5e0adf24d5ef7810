import pytest

_results: dict[int, dict[str, tuple[str, bool, float]]] = {}
_notes: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.fixture
def note():
    """Record a line for the acceptance summary (e.g. a reported mismatch)."""
    return _notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.failed):
        _results.setdefault(number, {})[item.name] = (title, report.passed, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        parts = _results[number]
        title = next(iter(parts.values()))[0]
        passed = all(ok for _, ok, _ in parts.values())
        duration = sum(d for _, _, d in parts.values())
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status} ({duration:.2f}s): {title}")
        for name, (_, ok, _) in parts.items():
            if not ok:
                terminalreporter.write_line(f"    failed part: {name}")
    for line in _notes:
        terminalreporter.write_line(f"note: {line}")
