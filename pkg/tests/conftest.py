import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fluentnet import procedures  # noqa: E402


@pytest.fixture(scope="session")
def scenario():
    return procedures.load_scenario()


def pytest_terminal_summary(terminalreporter):
    # surface the acceptance verdict lines even under output capture
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.VERDICTS:
            terminalreporter.write_line(line)
