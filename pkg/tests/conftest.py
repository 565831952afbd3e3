import numpy as np
import pytest

from finslerlab import SurfacePatch, make_metric


@pytest.fixture(scope="session")
def euclid():
    return make_metric("euclidean")


@pytest.fixture(scope="session")
def flat():
    return make_metric("flat")


@pytest.fixture(scope="session")
def randers03():
    return make_metric("randers", beta=(0.3, 0.0))


@pytest.fixture(scope="session")
def randers_torus():
    return make_metric("randers", surface=SurfacePatch.torus(), beta=(0.3, 0.0))


@pytest.fixture(scope="session")
def round1():
    return make_metric("round", radius=1.0)


@pytest.fixture(scope="session")
def katok03():
    return make_metric("katok", alpha=0.3)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def all_families(euclid, flat, randers03, round1, katok03):
    return [euclid, flat, randers03, round1, katok03]
