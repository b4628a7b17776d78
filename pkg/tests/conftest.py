import pytest

# acceptance verdicts, one line per criterion, printed after the run
VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(number: int, name: str, ok: bool, detail: str) -> bool:
        VERDICTS[number] = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
        print(VERDICTS[number])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])
