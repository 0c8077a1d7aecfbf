import numpy as np
import pytest
from hypothesis import strategies as st

from hcdr import control as ctl
from hcdr import kinematics as kin
from hcdr import redundancy as red
from hcdr import sim
from hcdr.config import load_params, load_scenario

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def params():
    return load_params()


@pytest.fixture(scope="session")
def scenario1():
    return load_scenario("scenario1")


@pytest.fixture(scope="session")
def scenario2():
    return load_scenario("scenario2")


@pytest.fixture(scope="session")
def plan_toauj(params, scenario1):
    return red.plan(scenario1, params, method="toauj")


@pytest.fixture(scope="session")
def plan_toaj(params, scenario1):
    return red.plan(scenario1, params, method="toaj")


@pytest.fixture(scope="session")
def trace_off(params, scenario2, plan_toauj):
    return sim.simulate(scenario2, params, plan_toauj, gains=ctl.ControlGains.zeros())


@pytest.fixture(scope="session")
def trace_on(params, scenario2, plan_toauj):
    return sim.simulate(scenario2, params, plan_toauj,
                        gains=ctl.ControlGains(scenario2.kp, scenario2.kd, scenario2.ki))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def states(planar=False):
    """Hypothesis strategy for (q, qd) inside the cable-feasible region."""
    seeds = st.integers(min_value=0, max_value=2**32 - 1)
    return seeds.map(lambda s: tuple(a[0] for a in kin.random_states(
        np.random.default_rng(s), 1, planar=planar)))
