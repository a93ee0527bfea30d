import pytest

# acceptance tests register one line each; printed after the run so the
# terminal shows a compact pass/fail table whatever order pytest used
_ACCEPTANCE_LINES = {}


def record_acceptance(number: int, label: str, ok: bool, detail: str = ""):
    mark = "PASS" if ok else "FAIL"
    suffix = (" | " + detail) if detail else ""
    _ACCEPTANCE_LINES[number] = "ACCEPTANCE %02d %s: %s%s" % (
        number, mark, label, suffix)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(_ACCEPTANCE_LINES[n])


@pytest.fixture
def acceptance():
    return record_acceptance
