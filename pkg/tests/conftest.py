import numpy as np
import pytest

from crngames.cli import load_inputs


def preset(name):
    return load_inputs(name, None)


@pytest.fixture(scope="session")
def ex1():
    return preset("example1")


@pytest.fixture(scope="session")
def ex2():
    return preset("example2")


@pytest.fixture(scope="session")
def ex3():
    return preset("example3")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
