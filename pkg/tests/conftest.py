import pytest

from horizonlab.catalog import catalog_load
from horizonlab.jang import continuation
from horizonlab.spheregrid import SphereGrid


@pytest.fixture(scope="session")
def flat_data():
    return catalog_load("flat_vacuum")


@pytest.fixture(scope="session")
def pg_data():
    return catalog_load("painleve_gullstrand", {"M": 1.0})


@pytest.fixture(scope="session")
def iso_data():
    return catalog_load("isotropic_schwarzschild", {"M": 1.0})


@pytest.fixture(scope="session")
def fck_data():
    return catalog_load("flat_constant_k", {"c": 0.1})


@pytest.fixture(scope="session")
def periodic_data():
    return catalog_load("periodic_constant_k", {"c": 0.1})


@pytest.fixture(scope="session")
def pg_run(pg_data):
    return continuation(pg_data, "geo:1:0.6:1e-3")


@pytest.fixture(scope="session")
def periodic_run(periodic_data):
    return continuation(periodic_data, "geo:0.5:0.5:0.004")


@pytest.fixture(scope="session")
def grid16():
    return SphereGrid(16, 1)


@pytest.fixture(scope="session")
def grid12():
    return SphereGrid(12, 1)
