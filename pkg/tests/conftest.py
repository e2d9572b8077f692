import pytest

_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def record():
    """Record one acceptance verdict line: ``record(label, passed, detail)``."""
    def _rec(label: str, passed: bool, detail: str = ""):
        _RESULTS.append((label, bool(passed), detail))
        print(f"{label}: {'PASS' if passed else 'FAIL'} {detail}")
    return _rec


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(_RESULTS, key=lambda r: int(r[0].split()[1].rstrip(":").split("(")[0])):
        terminalreporter.write_line(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
