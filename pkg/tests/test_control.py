import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcdr import cable_tension as ct
from hcdr import control as ctl

vec7 = st.lists(st.floats(-10, 10), min_size=7, max_size=7).map(np.array)


@pytest.fixture(scope="module")
def A_m3(params):
    return ct.reduced_structure_matrix(params, np.zeros(11))


@pytest.fixture(scope="module")
def gains(scenario2):
    return ctl.ControlGains.from_scenario(scenario2)


def test_zero_error_gives_zero_input(A_m3, gains):
    z = np.zeros(7)
    u, _ = ctl.control_step(z, z, z, z, A_m3, 2e-4, gains, ctl.ControlState())
    np.testing.assert_array_equal(u, 0.0)


def test_single_arm_channel(A_m3, gains):
    ref = np.zeros(7)
    ref[5] = 0.1
    u, _ = ctl.control_step(ref, np.zeros(7), np.zeros(7), np.zeros(7), A_m3, 2e-4, gains,
                            ctl.ControlState())
    assert np.count_nonzero(u) == 1
    integral = 0.5 * 2e-4 * (0.1 + 0.1)
    assert u[5] == pytest.approx(1.8 * 0.1 + 6.75 * integral, rel=1e-12)


def test_input_map_against_solve(A_m3):
    B = ctl.input_map(A_m3)
    np.testing.assert_allclose(B[:2, :2] @ [1, 1], np.linalg.solve(A_m3[:2, 2:4], [1, 1]),
                               rtol=1e-12)
    np.testing.assert_array_equal(B[2:, 2:], np.eye(5))
    np.testing.assert_array_equal(B[:2, 2:], 0.0)
    np.testing.assert_array_equal(B[2:, :2], 0.0)


@settings(max_examples=50, deadline=None)
@given(vec7, vec7)
def test_joint_channels_decoupled_from_platform(v1, v2):
    A = np.array([[0.5, -0.5, 0.9, -0.9], [0.8, 0.8, -0.4, -0.4], [0.1, -0.1, 0.02, 0.03]])
    B = ctl.input_map(A)
    a, b = v1.copy(), v1.copy()
    b[:2] = v2[:2]
    np.testing.assert_array_equal((B @ a)[2:], (B @ b)[2:])


@settings(max_examples=30, deadline=None)
@given(vec7, vec7, vec7)
def test_zero_gains_zero_input(ref, meas, rate):
    A = np.array([[0.5, -0.5, 0.9, -0.9], [0.8, 0.8, -0.4, -0.4], [0.1, -0.1, 0.02, 0.03]])
    u, _ = ctl.control_step(ref, meas, rate, None, A, 2e-4, ctl.ControlGains.zeros(),
                            ctl.ControlState())
    np.testing.assert_array_equal(u, 0.0)


def test_trapezoidal_integral_matches_accumulation(A_m3):
    rng = np.random.default_rng(3)
    errors = rng.normal(size=(200, 7))
    Ts = 2e-4
    state = ctl.ControlState()
    g = ctl.ControlGains.zeros()
    for e in errors:
        _, state = ctl.control_step(e, np.zeros(7), np.zeros(7), None, A_m3, Ts, g, state)
    expect = errors[0] * Ts + Ts * (errors[1:] + errors[:-1]).sum(axis=0) / 2
    # the first step integrates against itself (no earlier sample)
    np.testing.assert_allclose(state.integral, expect, atol=1e-12)


def test_anti_windup(A_m3):
    state = ctl.ControlState(bound=np.full(7, 0.01))
    e = np.ones(7)
    for _ in range(100):
        _, state = ctl.control_step(e, np.zeros(7), np.zeros(7), None, A_m3, 1e-2, ctl.ControlGains.zeros(), state)
    np.testing.assert_array_equal(state.integral, 0.01)


def test_backward_difference_rate(A_m3):
    g = ctl.ControlGains(np.zeros(7), np.ones(7), np.zeros(7))
    state = ctl.ControlState(prev_error=np.zeros(7))
    e = np.full(7, 1e-3)
    u, _ = ctl.control_step(e, np.zeros(7), np.zeros(7), None, A_m3, 1e-3, g, state)
    np.testing.assert_allclose(u[2:], 1.0)


def test_singular_input_map_reported():
    with pytest.raises(ctl.SingularInputMapError):
        ctl.input_map(np.zeros((3, 4)))


def test_gain_validation():
    with pytest.raises(ValueError, match="negative"):
        ctl.ControlGains(-np.ones(7), np.zeros(7), np.zeros(7))
    with pytest.raises(ValueError, match="diagonal"):
        ctl.ControlGains(np.ones((7, 7)), np.zeros(7), np.zeros(7))
    g = ctl.ControlGains(np.diag(np.arange(7.0)), np.zeros(7), np.zeros(7))
    np.testing.assert_array_equal(g.kp, np.arange(7.0))
