import pytest

from salarymatch.binprob import BinGrid
from salarymatch.model import ModelParams


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run large simulations and Monte Carlo size/power checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def params():
    return ModelParams.default()


@pytest.fixture
def normal_params():
    return ModelParams.default(family="normal")


@pytest.fixture
def grid():
    return BinGrid(-0.2, 0.2, 0.002)
