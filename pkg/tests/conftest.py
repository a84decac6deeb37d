import pytest
from hypothesis import settings

# fixed example streams so every run of the suite checks the same instances
settings.register_profile("repro", derandomize=True, deadline=None)
settings.register_profile("explore", derandomize=False, deadline=None)
settings.load_profile("repro")

_LOG = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one summary line; all lines are repeated at the end of the run."""
    log = request.config.stash.setdefault(_LOG, [])

    def add(line: str):
        log.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_LOG, [])
    if log:
        terminalreporter.section("acceptance criteria")
        for line in log:
            terminalreporter.write_line(line)
