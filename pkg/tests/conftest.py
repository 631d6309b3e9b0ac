import numpy as np
import pytest

import meltrl as mr


@pytest.fixture(scope="session")
def material():
    return mr.MaterialParams()


@pytest.fixture(scope="session")
def laser():
    return mr.LaserParams(power=80.0)


@pytest.fixture(scope="session")
def adiabatic_bc():
    return mr.all_adiabatic()


@pytest.fixture()
def grid():
    return mr.GridSpec(dx_um=20.0, nx=64, ny=64, nz=16)


def make_uniform(grid, temp=300.0):
    return mr.TemperatureField.uniform(grid, temp)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
