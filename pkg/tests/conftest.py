import pytest

_results = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_results] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test still asserts on its own outcome."""
    lines = request.config.stash[_results]

    def record(name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_results, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
