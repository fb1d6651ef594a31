import os

import pytest

from heckelab.newforms import get_series


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """One coefficient cache shared by every test (and by CLI subprocess runs)."""
    path = os.environ.get("HECKELAB_TEST_CACHE") or str(tmp_path_factory.mktemp("coeffs"))
    return path


@pytest.fixture(scope="session")
def series(cache_dir):
    def get(label, B):
        return get_series(label, B, cache_dir)

    return get


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
