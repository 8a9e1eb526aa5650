import logging
import random

import pytest

from contilog import config
from contilog.mstruct import cyclic_table, discrete_wrap, gn_family, hilbert_tower, sym_hamming

# Short-hand decorators for test organization
describe = pytest.mark.describe
it = pytest.mark.it
usefixture = pytest.mark.usefixtures


@pytest.fixture(scope="session", autouse=True)
def quiet_logging():
    """Keep the contilog logger at WARNING unless a test raises it."""
    logger = logging.getLogger("contilog")
    previous = logger.level
    logger.setLevel(logging.WARNING)
    yield
    logger.setLevel(previous)


@pytest.fixture(scope="session")
def sym3():
    return sym_hamming(3)


@pytest.fixture(scope="session")
def sym4():
    return sym_hamming(4)


@pytest.fixture(scope="session")
def gn1():
    return gn_family(1)


@pytest.fixture(scope="session")
def gn2():
    return gn_family(2)


@pytest.fixture(scope="session")
def z6_discrete():
    return discrete_wrap(cyclic_table(6))


@pytest.fixture(scope="session")
def s3_discrete(sym3):
    return discrete_wrap(sym3)


@pytest.fixture(scope="session")
def plane_tower():
    """Real plane with balls B1..B2."""
    return hilbert_tower("real", 2, 2)


@pytest.fixture
def rng():
    return random.Random(config.SEED)


@pytest.fixture
def settings():
    return config.DEFAULTS
