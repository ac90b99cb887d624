import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL/SKIP line per acceptance criterion."""

    def record(number: int, title: str, passed: bool | None, detail: str) -> bool:
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"[{status}] criterion {number}: {title} ({detail})"
        _ACCEPTANCE[number] = line
        print(line)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
