import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcdr import dynamics as dyn
from hcdr import kinematics as kin
from hcdr import redundancy as red
from hcdr import trajectory as traj
from hcdr.config import PulseChannel

PROP = settings(max_examples=40, deadline=None)
seeds = st.integers(0, 2**32 - 1)
SUB_A, SUB_U = dyn.SUB_A, dyn.SUB_U


def random_jacobian(seed):
    return np.random.default_rng(seed).normal(size=(3, 5))


def random_spd(seed, n=8):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, n))
    return B @ B.T + n * np.eye(n)


@pytest.fixture(scope="module")
def short_scenario(scenario1):
    """A 50 ms move of about a centimetre, no disturbance."""
    p0 = scenario1.waypoints[0]
    return scenario1.replace(t_end=0.05, waypoint_times=np.array([0.0, 0.05]),
                             waypoints=np.array([p0, p0 + [0.01, 0.005, 0.005]]),
                             disturbance=())


@pytest.fixture(scope="module")
def short_plan(params, short_scenario):
    return red.plan(short_scenario, params)


# --- pseudo-inverse and projector -------------------------------------------


def test_pinv_of_orthonormal_rows():
    J = np.hstack([np.eye(3), np.zeros((3, 2))])
    Jp, rank = red.pseudo_inverse(J)
    np.testing.assert_array_equal(Jp, J.T)
    assert rank == 3


@PROP
@given(seeds)
def test_penrose_identities(seed):
    J = random_jacobian(seed)
    Jp, _ = red.pseudo_inverse(J)
    np.testing.assert_allclose(J @ Jp @ J, J, atol=1e-10)
    np.testing.assert_allclose(Jp @ J @ Jp, Jp, atol=1e-10)
    np.testing.assert_allclose(J @ Jp, (J @ Jp).T, atol=1e-10)
    np.testing.assert_allclose(Jp @ J, (Jp @ J).T, atol=1e-10)


def test_rank_deficient_projector():
    rng = np.random.default_rng(7)
    r1, r2 = rng.normal(size=(2, 5))
    J = np.array([r1, r2, r1])
    Jp, rank = red.pseudo_inverse(J)
    assert rank == 2
    # column space of J is {(a, b, a)}
    e1 = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
    e2 = np.array([0.0, 1.0, 0.0])
    np.testing.assert_allclose(J @ Jp, np.outer(e1, e1) + np.outer(e2, e2), atol=1e-10)


@PROP
@given(seeds)
def test_projector_algebra(seed):
    J = random_jacobian(seed)
    Jp, _ = red.pseudo_inverse(J)
    P = red.null_projector(J, Jp)
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    np.testing.assert_allclose(P @ Jp, 0, atol=1e-10)
    np.testing.assert_allclose(J @ P, 0, atol=1e-10)


# --- actuated-only recursion ------------------------------------------------


def test_toaj_fixed_point():
    J = random_jacobian(1)
    out = red.toaj_step(J, np.zeros(5), np.zeros(3), 2e-4, np.full(5, 500.0), random_spd(2, 5),
                        np.zeros((5, 5)), np.zeros(5))
    np.testing.assert_array_equal(out, 0.0)


@PROP
@given(seeds)
def test_toaj_task_consistency(seed):
    rng = np.random.default_rng(seed)
    J = rng.normal(size=(3, 5))
    pd = rng.normal(size=3)
    out = red.toaj_step(J, rng.normal(size=5), pd, 2e-4, rng.uniform(0, 500, 5),
                        random_spd(seed, 5), rng.normal(size=(5, 5)), rng.normal(size=5) * 100)
    np.testing.assert_allclose(J @ out, pd, atol=1e-9)


def test_toaj_matches_term_by_term_evaluation(params, scenario1):
    """First planner step from the scenario start, assembled with explicit inverses."""
    q = np.array(scenario1.initial_q)
    qd_prev = np.random.default_rng(4).normal(size=11) * 0.1
    A = kin.IDX_A
    M = dyn.mass_matrix(params, q)
    C = dyn.coriolis_matrix(params, q, qd_prev)
    G = dyn.gravity_vector(params, q)
    J = kin.task_jacobian(params, q)
    seg = traj.segment_schedule(scenario1.waypoints, scenario1.waypoint_times, 2e-4)[0]
    pd = traj.sample(1, seg, kin.end_effector(params, q), np.zeros(3)).pd_cmd
    Ts, K = 2e-4, np.diag(scenario1.k_dp_a)

    Minv = np.linalg.inv(M[np.ix_(A, A)])
    Jp = J.T @ np.linalg.inv(J @ J.T)
    P = np.eye(5) - Jp @ J
    expect = Jp @ pd + P @ ((np.eye(5) - Ts * Minv @ C[np.ix_(A, A)] - Ts * K) @ qd_prev[A]
                            - Ts * Minv @ G[A])
    got = red.toaj_step(J, qd_prev[A], pd, Ts, scenario1.k_dp_a, M[np.ix_(A, A)],
                        C[np.ix_(A, A)], G[A])
    np.testing.assert_allclose(got, expect, rtol=0, atol=1e-12)


# --- coupled recursion ------------------------------------------------------


@PROP
@given(seeds)
def test_schur_terms_match_full_solve(seed):
    M = random_spd(seed)
    F = np.random.default_rng(seed + 1).normal(size=8) * 50
    xi_a, xi_u = red.schur_terms(M, F[SUB_A], F[SUB_U])
    z = np.linalg.solve(M, F)
    np.testing.assert_allclose(xi_a, z[SUB_A], atol=1e-9)
    np.testing.assert_allclose(xi_u, z[SUB_U], atol=1e-9)


@PROP
@given(seeds)
def test_decoupled_case_reduces_to_actuated_only(seed):
    rng = np.random.default_rng(seed)
    M = random_spd(seed)
    M[np.ix_(SUB_A, SUB_U)] = 0.0
    M[np.ix_(SUB_U, SUB_A)] = 0.0
    J = rng.normal(size=(3, 5))
    qd_prev, pd, F_A = rng.normal(size=5), rng.normal(size=3), rng.normal(size=5) * 10
    K_a = rng.uniform(0, 500, 5)
    qd_a, qd_u, _, _ = red.toauj_step(J, qd_prev, np.zeros(3), pd, 2e-4, K_a, np.zeros(3), M,
                                      F_A, np.zeros(3))
    ref = red.toaj_step(J, qd_prev, pd, 2e-4, K_a, M[np.ix_(SUB_A, SUB_A)], np.zeros((5, 5)), F_A)
    np.testing.assert_array_equal(qd_u, 0.0)
    np.testing.assert_allclose(qd_a, ref, rtol=0, atol=1e-12)


def test_unactuated_damping():
    M = random_spd(3)
    qd_u = np.array([0.1, -0.2, 0.3])
    _, out, _, _ = red.toauj_step(np.eye(3, 5), np.zeros(5), qd_u, np.zeros(3), 2e-4, np.zeros(5),
                                  np.full(3, 500.0), M, np.zeros(5), np.zeros(3))
    np.testing.assert_allclose(out, 0.9 * qd_u, rtol=1e-14)


def test_self_motion_decays():
    """Zero task velocity and bias: the null-space velocity contracts for Ts K in [0, 2]."""
    rng = np.random.default_rng(11)
    M = random_spd(5)
    for _ in range(100):
        J = rng.normal(size=(3, 5))
        K_a = rng.uniform(0, 1e4, 5)
        qd = rng.normal(size=5)
        norms = []
        for _ in range(20):
            qd, _, _, _ = red.toauj_step(J, qd, np.zeros(3), np.zeros(3), 2e-4, K_a, np.zeros(3),
                                         M, np.zeros(5), np.zeros(3))
            norms.append(np.linalg.norm(qd))
        assert np.all(np.diff(norms) <= 1e-15)
        P = red.null_projector(J)
        rho = np.abs(np.linalg.eigvals(P @ (np.eye(5) - 2e-4 * np.diag(K_a)))).max()
        assert rho <= 1 + 2e-4 * K_a.max()


def test_singular_schur_block_reported():
    M = np.eye(8)
    M[np.ix_(SUB_U, SUB_U)] = 0.0
    with pytest.raises(np.linalg.LinAlgError, match="cond"):
        red.schur_terms(M, np.zeros(5), np.zeros(3))


def test_torque_cost():
    M = random_spd(9)
    F = np.arange(8.0)
    cost, tau = red.torque_cost(M, np.zeros(5), np.zeros(3), F[SUB_A], F[SUB_U])
    np.testing.assert_allclose(tau, F)
    z = np.linalg.solve(M, F)
    assert cost == pytest.approx(0.5 * z @ z, rel=1e-12)
    # accelerations that cancel the bias cost nothing
    acc = -np.linalg.solve(M, F)
    cost, _ = red.torque_cost(M, acc[SUB_A], acc[SUB_U], F[SUB_A], F[SUB_U])
    assert cost < 1e-25


def test_pulse_vector_half_open():
    ch = (PulseChannel(3, 20.0, 0.1, 0.3), PulseChannel(4, 2.0, 0.1, 0.3))
    assert red.pulse_vector(0.05, ch)[2] == 0.0
    np.testing.assert_array_equal(red.pulse_vector(0.1, ch)[2:4], [20.0, 2.0])
    assert red.pulse_vector(0.3, ch)[2] == 0.0


# --- pendulum balance -------------------------------------------------------


def test_home_static_pendulums(params):
    sol = red.pendulum_equilibrium(params, np.zeros(11))
    np.testing.assert_array_equal(sol.theta, [0.0, 0.0])
    assert np.abs(sol.residual).max() < 1e-9


def test_in_plane_arm_needs_no_balance(params):
    q = np.zeros(11)
    q[9:11] = 0.7, -1.2
    assert np.abs(red.pendulum_residual(params, q, [0.0, 0.0])).max() <= 1e-9


def static_moment_grid(params, q, centre=(0.0, 0.0), half_width=np.pi, step=1e-2):
    """Roll moment of all bodies about the platform COM on a pendulum-angle grid.

    Independent of the solver: body COMs come from forward kinematics and the
    moment is ``sum (p_c - p_m) x m g y``. Each pendulum only moves its own COM,
    so the grid is assembled from two one-dimensional sweeps.
    """
    base = np.array(q, dtype=float)
    base[kin.IDX_P] = 0.0
    pose = kin.forward_kinematics(params, base)
    arm = sum(m * (c - pose.p_m)[2] for m, c in
              zip(params.link_mass, (pose.p_ac1, pose.p_ac2, pose.p_ac3)))
    axes, z = [], []
    for k, name in ((0, "p_pc1"), (1, "p_pc2")):
        th = np.arange(centre[k] - half_width, centre[k] + half_width + step / 2, step)
        zz = np.empty_like(th)
        for i, t in enumerate(th):
            x = base.copy()
            x[kin.IDX_P[k]] = t
            zz[i] = (getattr(kin.forward_kinematics(params, x), name) - pose.p_m)[2]
        axes.append(th)
        z.append(params.pendulum_mass[k] * zz)
    return axes, -params.g * (arm + z[0][:, None] + z[1][None, :])


def min_norm_zero(axes, Mx):
    """Smallest-norm grid cell across which the moment changes sign, else the least moment."""
    s = np.sign(Mx)
    cells = (s[:-1, :-1] != s[1:, :-1]) | (s[:-1, :-1] != s[:-1, 1:])
    i, j = np.nonzero(cells)
    if i.size == 0:
        i, j = np.unravel_index(np.argmin(np.abs(Mx)), Mx.shape)
        return np.array([axes[0][i], axes[1][j]])
    mid = np.column_stack([(axes[0][i] + axes[0][i + 1]) / 2, (axes[1][j] + axes[1][j + 1]) / 2])
    return mid[np.argmin(np.linalg.norm(mid, axis=1))]


def grid_equilibrium(params, q):
    axes, Mx = static_moment_grid(params, q)
    coarse = min_norm_zero(axes, Mx)
    axes, Mx = static_moment_grid(params, q, centre=coarse, half_width=0.03, step=1e-3)
    return min_norm_zero(axes, Mx)


def random_arm_pose(seed):
    rng = np.random.default_rng(seed)
    q = np.zeros(11)
    q[:2] = rng.uniform(-0.3, 0.3), rng.uniform(-0.15, 0.15)
    q[8:11] = rng.uniform(-np.pi, np.pi, 3)
    return q


@pytest.mark.parametrize("seed", range(5))
def test_static_balance_matches_grid_search(params, seed):
    q = random_arm_pose(seed)
    sol = red.pendulum_equilibrium(params, q)
    assert sol.converged
    assert np.abs(sol.residual).max() <= 1e-6
    np.testing.assert_allclose(sol.theta, grid_equilibrium(params, q), atol=1e-3)


def test_static_pitch_moment_vanishes(params):
    """Gravity along y gives no pitch moment about the platform COM in any static pose."""
    rng = np.random.default_rng(2)
    for _ in range(10):
        q = random_arm_pose(int(rng.integers(1 << 30)))
        assert abs(red.pendulum_residual(params, q, rng.uniform(-3, 3, 2))[0]) < 1e-12


def test_unbalanceable_moment_returns_best_iterate(params):
    heavy = params.replace(link_mass=params.link_mass * 50)
    q = np.zeros(11)
    q[8:10] = np.pi / 2, 1.0
    sol = red.pendulum_equilibrium(heavy, q)
    assert np.abs(sol.residual).max() > 1e-3
    axes, Mx = static_moment_grid(heavy, q)
    assert np.abs(sol.residual[1]) <= np.abs(Mx).min() + 1e-6
    # the solver does not wrap angles
    gap = np.angle(np.exp(1j * (sol.theta - grid_equilibrium(heavy, q))))
    np.testing.assert_allclose(gap, 0.0, atol=1e-3)


# --- planner ----------------------------------------------------------------


def test_short_plan_reaches_target(short_plan, short_scenario):
    n = short_scenario.n_steps + 1
    assert len(short_plan) == n
    for arr in (short_plan.q, short_plan.qd, short_plan.p_e, short_plan.cost, short_plan.residual):
        assert len(arr) == n
    assert np.linalg.norm(short_plan.p_e[-1] - short_scenario.waypoints[-1]) < 1e-3
    ok = ~short_plan.clamped & (short_plan.rank == 3)
    assert short_plan.residual[ok].max() < 1e-9


def test_plan_respects_limits(short_plan, short_scenario):
    lim = short_scenario.limits
    assert np.all(short_plan.qd_A <= lim.qd_max + 1e-12)
    assert np.all(short_plan.qd_A >= lim.qd_min - 1e-12)
    dq = np.diff(short_plan.qd_A, axis=0)
    assert np.all(dq <= lim.dqd_max + 1e-9) and np.all(dq >= lim.dqd_min - 1e-9)
    np.testing.assert_array_equal(short_plan.q[:, kin.IDX_GAMMA], 0.0)


def test_plan_is_deterministic(params, short_scenario, short_plan):
    again = red.plan(short_scenario, params)
    np.testing.assert_array_equal(again.q, short_plan.q)
    np.testing.assert_array_equal(again.qd, short_plan.qd)


def test_pulse_drives_unactuated_motion_without_damping(params, short_scenario):
    pulsed = short_scenario.replace(disturbance=(PulseChannel(3, 20.0, 0.0, 0.02),))
    toaj = red.plan(pulsed, params, method="toaj")
    toauj = red.plan(pulsed, params, method="toauj")
    assert np.abs(toaj.qd_U[-1]).max() > np.abs(toauj.qd_U[-1]).max()


def test_unknown_method(params, short_scenario):
    with pytest.raises(ValueError, match="unknown method"):
        red.plan(short_scenario, params, method="dls")


def test_sub_operation_failure_reports_step(params, short_scenario):
    far = short_scenario.replace(initial_q=np.r_[1.5, 0.0, np.zeros(6), np.pi / 4, 0.0, 0.0])
    with pytest.raises(red.PlanningError, match="step 1"):
        red.plan(far, params)


@pytest.mark.xfail(strict=True, reason="TOAUJ ends with the smaller last-link angle on scenario 1; see decisions ledger")
def test_final_wrist_angle_stays_away_from_zero(plan_toauj, plan_toaj):
    print(f"theta_a3 at the end: TOAUJ {plan_toauj.q[-1, 10]:.4f}, TOAJ {plan_toaj.q[-1, 10]:.4f}")
    assert abs(plan_toauj.q[-1, 10]) > abs(plan_toaj.q[-1, 10])
