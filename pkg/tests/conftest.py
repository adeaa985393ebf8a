import sys
from pathlib import Path

import pytest

from retarget.ir import parse_model
from retarget.profiles import builtin_profile

DATA = Path(__file__).parent / "data"
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def load():
    def _load(name):
        return parse_model((DATA / f"{name}.nng.json").read_bytes())
    return _load


@pytest.fixture
def mobile():
    return builtin_profile("mobile-strict")


@pytest.fixture
def tnn():
    return builtin_profile("tnn")


@pytest.fixture
def full():
    return builtin_profile("full")


acceptance_lines = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(acceptance_lines, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(acceptance_lines, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
