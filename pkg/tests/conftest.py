import pytest

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, limit): acceptance criterion metadata")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number, title, limit = marker.args
    elapsed = getattr(item, "criterion_elapsed", rep.duration)
    reason = ""
    if rep.failed:
        reason = str(rep.longrepr.reprcrash.message).splitlines()[0] if hasattr(rep.longrepr, "reprcrash") else ""
    _ACCEPTANCE[number] = (title, rep.passed, elapsed, limit, reason)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, elapsed, limit, reason = _ACCEPTANCE[number]
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {elapsed:7.2f} s (limit {limit} s)  {title}"
        if reason:
            line += f"  -- {reason}"
        terminalreporter.write_line(line)
