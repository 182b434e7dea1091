import pytest


def pytest_configure(config):
    config._acceptance = []


@pytest.fixture
def criterion(request):
    """Record a one-line verdict for an acceptance criterion."""
    log = request.config._acceptance

    def record(number, title, ok, detail=""):
        log.append((number, title, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = sorted(config._acceptance)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in rows:
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number} [{verdict}] {title}: {detail}")
