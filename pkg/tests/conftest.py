import pytest

from flowcomplete import Completion, builtin


@pytest.fixture(scope="session")
def example2():
    return builtin("example2")


@pytest.fixture(scope="session")
def example3():
    return builtin("example3")


@pytest.fixture(scope="session")
def blowup1d():
    return builtin("blowup1d")


@pytest.fixture(scope="session")
def rotation2d():
    return builtin("rotation2d")


@pytest.fixture(scope="session")
def linear1d():
    return builtin("linear1d")


@pytest.fixture(scope="session")
def comp2(example2):
    return Completion(example2.field)


@pytest.fixture(scope="session")
def comp3(example3):
    return Completion(example3.field)


@pytest.fixture(scope="session")
def comp_rot(rotation2d):
    return Completion(rotation2d.field)
