"""Shared fixtures and the --runslow switch for long reproduction checks."""
import numpy as np
import pytest

from synlattice.lattice import InteractionSpec, LatticeSpec, load_c3_table


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproduction checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long reproduction check, run with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def c3_table():
    return load_c3_table()


@pytest.fixture
def nine_sites():
    return tuple(range(-4, 5))


@pytest.fixture
def tilted_chain(nine_sites):
    return LatticeSpec.chain(nine_sites, 0.45, 0.8)


@pytest.fixture
def interaction(c3_table):
    return InteractionSpec.from_table(0.34, c3_table)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
