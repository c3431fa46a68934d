import os

import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run the hours-long full-scale reproduction check")


def pytest_configure(config):
    config.addinivalue_line("markers", "fullscale: hours-long run, enabled by --runslow or DWMR_RUNSLOW=1")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow") or os.environ.get("DWMR_RUNSLOW") == "1":
        return
    skip = pytest.mark.skip(reason="full-scale run; pass --runslow to enable")
    for item in items:
        if "fullscale" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[num])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
