import numpy as np
import pytest

from srdetect.model import beta_model, exponential_model, gaussian_model


@pytest.fixture(scope="session")
def beta():
    return beta_model()


@pytest.fixture(scope="session")
def gauss():
    return gaussian_model(1.0)


@pytest.fixture(scope="session")
def expo():
    return exponential_model()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
