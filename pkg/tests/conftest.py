import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from welfareid import fixtures

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def qlogit():
    return fixtures.quasilinear_logit()


@pytest.fixture(scope="session")
def qprobit():
    return fixtures.quasilinear_probit()


@pytest.fixture(scope="session")
def normal_good():
    return fixtures.income_effect()


@pytest.fixture(scope="session")
def multinomial():
    return fixtures.multinomial()


@pytest.fixture(scope="session")
def strong_income():
    return fixtures.strong_income_effect()


@pytest.fixture(scope="session")
def shape_model():
    return fixtures.targeting_shape()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
