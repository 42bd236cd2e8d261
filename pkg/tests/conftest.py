import pytest

_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record a criterion's outcome; failures still fail the test."""
    num = request.node.get_closest_marker("criterion").args[0]

    def record(ok: bool, detail: str):
        prev = _ACCEPTANCE.get(num, (True, []))
        _ACCEPTANCE[num] = (prev[0] and bool(ok), prev[1] + [detail])
        return ok

    yield record


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker and call.when == "call" and call.excinfo is not None:
        num = marker.args[0]
        prev = _ACCEPTANCE.get(num, (True, []))
        _ACCEPTANCE[num] = (False, prev[1] + [f"{item.name}: {call.excinfo.typename}"])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        ok, details = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  " + "; ".join(details))
