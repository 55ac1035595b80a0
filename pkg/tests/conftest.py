import pytest

from foldtower import load_fixture


@pytest.fixture(scope="session")
def theta12():
    return load_fixture("THETA_CYCLE", 12)


@pytest.fixture(scope="session")
def theta24():
    return load_fixture("THETA_CYCLE", 24)


@pytest.fixture(scope="session")
def repeat8():
    return load_fixture("REPEAT_AB", 8)


@pytest.fixture(scope="session")
def rank3sp8():
    return load_fixture("RANK3_SP", 8)
