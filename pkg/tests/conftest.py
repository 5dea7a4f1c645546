import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Print and record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_LINES, [])

    def emit(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
