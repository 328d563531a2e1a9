import logging

import numpy as np
import pytest

from ebunfold.scenarios import build_setup, preset

_CRITERIA = {}


@pytest.fixture(autouse=True)
def _quiet_leakage_warning(caplog):
    caplog.set_level(logging.ERROR, logger="ebunfold.scenarios")


@pytest.fixture(scope="session")
def gmm_setup():
    logging.getLogger("ebunfold.scenarios").setLevel(logging.ERROR)
    return build_setup(preset("gmm"))


@pytest.fixture(scope="session")
def z_setup():
    logging.getLogger("ebunfold.scenarios").setLevel(logging.ERROR)
    return build_setup(preset("z"))


@pytest.fixture
def rng():
    return np.random.default_rng(20131105)


@pytest.fixture(scope="session")
def criterion():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        _CRITERIA.setdefault(number, []).append((passed, line))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        for _, line in _CRITERIA[number]:
            terminalreporter.write_line(line)
