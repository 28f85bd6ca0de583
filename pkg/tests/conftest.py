import copy

import pytest

from exitlab.builtin import CONFIGS
from exitlab.model import model_from_config

ACCEPTANCE = []


def record(criterion, title, passed, detail):
    """Register one acceptance line; printed at the end of the session."""
    line = f"criterion {criterion:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE.append((criterion, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)


def make_model(name, **overrides):
    cfg = copy.deepcopy(CONFIGS[name])
    cfg.update(overrides)
    return model_from_config(cfg)


@pytest.fixture(scope="session")
def ou():
    return make_model("ou_disk")


@pytest.fixture(scope="session")
def two_state():
    return make_model("two_state")
