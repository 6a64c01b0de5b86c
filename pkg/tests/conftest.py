import numpy as np
import pytest

from ssem_ukf.model import ModelParams, ShellGrid, SSEMModel
from ssem_ukf.scenarios import demo_model


@pytest.fixture(scope="session")
def default_model():
    return SSEMModel()


@pytest.fixture(scope="session")
def small_model():
    return demo_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_model(**overrides):
    """Three shells high enough that drag is mild."""
    return SSEMModel(ModelParams(**overrides), ShellGrid(h_min=700.0, n_shells=3, dh=50.0))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
