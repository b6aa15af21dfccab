import pytest

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion and return the verdict."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, title, checks, seconds):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{name}: {'ok' if passed else 'FAILED'}" for name, passed in checks)
        line = f"criterion {number} {'PASS' if ok else 'FAIL'} ({seconds:.1f}s) {title}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
