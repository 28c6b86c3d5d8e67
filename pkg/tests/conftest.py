from __future__ import annotations

import math

import numpy as np
import pytest

from subflow.perron import eigen_system, vandermonde_constants
from subflow.substitution import parse_substitution, substitution_matrix

# closed forms for a -> abbb, b -> a: x^2 - x - 3
SQRT13 = math.sqrt(13.0)
THETA = (1 + SQRT13) / 2
THETA2 = (1 - SQRT13) / 2
BETA = math.log(abs(THETA2)) / math.log(THETA)


@pytest.fixture(scope="session")
def zstar():
    return parse_substitution("a->abbb; b->a")


@pytest.fixture(scope="session")
def fib():
    return parse_substitution("a->ab; b->a")


@pytest.fixture(scope="session")
def thue_morse():
    return parse_substitution("a->ab; b->ba")


@pytest.fixture(scope="session")
def zstar_es(zstar):
    return eigen_system(substitution_matrix(zstar))


@pytest.fixture(scope="session")
def zstar_vd(zstar_es):
    return vandermonde_constants(zstar_es)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
