"""Torque-optimal redundancy resolution for the actuated and unactuated joints.

Two velocity-level recursions are provided. :func:`toaj_step` resolves the
five actuated joints against the three-dimensional end-effector task while
pushing null-space motion down the actuated-only inertia. :func:`toauj_step`
does the same through the 8x8 actuated+unactuated inertia and additionally
damps the unactuated platform motions (``p_mz``, ``alpha``, ``beta``).

:func:`plan` drives either recursion along a waypoint schedule, solving the
pendulum balance and cable tensions on the way, and returns joint-space
reference trajectories for the controller.

Self-motion damping enters as ``(I - Ts K)``, which contracts the previous
velocity for every ``K >= 0``.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import cable_tension as ct
from . import dynamics as dyn
from . import kinematics as kin
from . import trajectory as traj
from .config import HcdrParams, ScenarioConfig

PINV_RTOL = 1e-10


class PlanningError(RuntimeError):
    def __init__(self, step, cause):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {cause}")


# ---------------------------------------------------------------------------
# linear algebra


def pseudo_inverse(J, rtol=PINV_RTOL):
    """Moore-Penrose inverse by SVD; returns ``(J_pinv, rank)``.

    Singular values below ``rtol * sigma_max`` are treated as zero.
    """
    J = np.asarray(J, dtype=float)
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    keep = s > rtol * (s[0] if s.size else 0.0)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T, int(keep.sum())


def null_projector(J, J_pinv=None):
    J_pinv = pseudo_inverse(J)[0] if J_pinv is None else J_pinv
    return np.eye(J.shape[1]) - J_pinv @ J


def _solve(A, b, what):
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e14:
        raise np.linalg.LinAlgError(f"{what} singular (cond {cond:.3e})")
    return np.linalg.solve(A, b)


def schur_terms(M_AU, F_A, F_U, sub_a=dyn.SUB_A, sub_u=dyn.SUB_U):
    """``(Xi_A, Xi_U)`` from Schur complements of the 8x8 inertia.

    ``Xi_A = S_A^-1 (F_A - M_au M_uu^-1 F_U)`` with
    ``S_A = M_aa - M_au M_uu^-1 M_ua`` and symmetrically for ``Xi_U``; the
    pair equals ``M_AU^-1 [F_A; F_U]`` arranged by block.
    """
    M_aa = M_AU[np.ix_(sub_a, sub_a)]
    M_au = M_AU[np.ix_(sub_a, sub_u)]
    M_ua = M_AU[np.ix_(sub_u, sub_a)]
    M_uu = M_AU[np.ix_(sub_u, sub_u)]
    uu_inv_ua = _solve(M_uu, np.column_stack([M_ua, F_U]), "M_UU")
    S_A = M_aa - M_au @ uu_inv_ua[:, :-1]
    xi_a = _solve(S_A, F_A - M_au @ uu_inv_ua[:, -1], "actuated Schur complement")
    aa_inv_au = _solve(M_aa, np.column_stack([M_au, F_A]), "M_AA")
    S_U = M_uu - M_ua @ aa_inv_au[:, :-1]
    xi_u = _solve(S_U, F_U - M_ua @ aa_inv_au[:, -1], "unactuated Schur complement")
    return xi_a, xi_u


# ---------------------------------------------------------------------------
# recursions


def toaj_step(J, qd_a_prev, pd_e, Ts, K_a, M_a, C_a, bias_a, J_pinv=None):
    """One actuated-only torque-optimal velocity update.

    ``qd_A = J+ pd + P [(I - Ts M_a^-1 C_a - Ts K_a) qd_A_prev - Ts M_a^-1 bias_a]``
    with ``P = I - J+ J`` and ``bias_a = G_A + tau_dA``.
    """
    J_pinv = pseudo_inverse(J)[0] if J_pinv is None else J_pinv
    P = np.eye(5) - J_pinv @ J
    K = np.diag(K_a) if np.ndim(K_a) == 1 else np.asarray(K_a)
    MinvC = _solve(M_a, np.column_stack([C_a, bias_a]), "M_A")
    drift = qd_a_prev - Ts * (MinvC[:, :5] @ qd_a_prev) - Ts * (K @ qd_a_prev) - Ts * MinvC[:, 5]
    return J_pinv @ pd_e + P @ drift


def toauj_step(J, qd_a_prev, qd_u_prev, pd_e, Ts, K_a, K_u, M_AU, F_A, F_U, J_pinv=None):
    """One actuated+unactuated torque-optimal velocity update.

    Returns ``(qd_A, qd_U, Xi_A, Xi_U)`` where
    ``qd_A = J+ pd + P (I - Ts K_a) qd_A_prev - Ts P Xi_A`` and
    ``qd_U = (I - Ts K_u) qd_U_prev - Ts Xi_U``.
    """
    J_pinv = pseudo_inverse(J)[0] if J_pinv is None else J_pinv
    P = np.eye(5) - J_pinv @ J
    K_a = np.diag(K_a) if np.ndim(K_a) == 1 else np.asarray(K_a)
    K_u = np.diag(K_u) if np.ndim(K_u) == 1 else np.asarray(K_u)
    xi_a, xi_u = schur_terms(M_AU, F_A, F_U)
    qd_a = J_pinv @ pd_e + P @ (qd_a_prev - Ts * (K_a @ qd_a_prev)) - Ts * (P @ xi_a)
    qd_u = qd_u_prev - Ts * (K_u @ qd_u_prev) - Ts * xi_u
    return qd_a, qd_u, xi_a, xi_u


def torque_cost(M_AU, qdd_a, qdd_u, F_A, F_U):
    """``(Lambda, tau)`` with ``tau = M_AU qdd + F`` and ``Lambda = |M_AU^-1 tau|^2 / 2``."""
    qdd = np.empty(8)
    qdd[dyn.SUB_A], qdd[dyn.SUB_U] = qdd_a, qdd_u
    F = np.empty(8)
    F[dyn.SUB_A], F[dyn.SUB_U] = F_A, F_U
    tau = M_AU @ qdd + F
    z = np.linalg.solve(M_AU, tau)
    return 0.5 * float(z @ z), tau


# ---------------------------------------------------------------------------
# pendulum balance


@dataclass
class ArmMotion:
    """Accelerations feeding the reaction-moment balance (world frame unless noted)."""

    a_m: np.ndarray = field(default_factory=lambda: np.zeros(3))  # platform COM
    v_dot_ac: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))  # link COMs
    w_ac: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))  # link body frames
    w_dot_ac: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))  # link body frames


@dataclass
class PendulumSolution:
    theta: np.ndarray  # (2,)
    residual: np.ndarray  # (2,) [sum M_y, sum M_x]
    converged: bool
    iterations: int


def arm_reaction_moment(params: HcdrParams, q, motion: ArmMotion):
    """Moment of the arm about the platform COM.

    Link loads ``f_j = m_j (dv_j + g y)`` are accumulated joint by joint along
    the chain, plus each link's rate of angular momentum.
    """
    pose = kin.forward_kinematics(params, q)
    g = np.array([0.0, params.g, 0.0])
    f = [params.link_mass[j] * (motion.v_dot_ac[j] + g) for j in range(3)] + [np.zeros(3)]
    p_a = [pose.p_a0, pose.p_a1, pose.p_a2, pose.p_a3]
    p_ac = [pose.p_ac1, pose.p_ac2, pose.p_ac3]
    p_m = pose.p_m
    M = np.zeros(3)
    for ell in (2, 3):
        M += _cross(p_a[ell] - p_a[ell - 1], sum(f[j] for j in range(ell, 4)))
    M += _cross(p_a[1] - p_m, f[1] + f[2] + f[3])
    for j in (2, 3):
        M += _cross(p_ac[j - 1] - p_a[j - 1], f[j - 1])
    M += _cross(p_ac[0] - p_m, f[0])
    Ra1 = kin.rot_y(q[8])
    Ra = [Ra1, Ra1 @ kin.rot_z(q[9]), Ra1 @ kin.rot_z(q[9]) @ kin.rot_z(q[10])]
    for j in range(3):
        I = params.link_inertia[j]
        w, wd = motion.w_ac[j], motion.w_dot_ac[j]
        M += Ra[j] @ (I * wd + _cross(w, I * w))
    return M


_STATIONARY = 1e-10


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _pendulum_terms(params, R, theta, F):
    """Pendulum moments (2, 3) about the platform COM and their theta-derivatives.

    ``R`` is the platform rotation and ``F[k]`` the inertial-plus-weight load
    on pendulum ``k``.
    """
    Mp = np.empty((2, 3))
    dMp = np.empty((2, 3))
    for k in (0, 1):
        c, s = np.cos(theta[k]), np.sin(theta[k])
        off = params.pendulum_com_offset[k]
        local = np.array([off[0], c * off[1] - s * off[2], s * off[1] + c * off[2]])
        d_local = np.array([0.0, -s * off[1] - c * off[2], c * off[1] - s * off[2]])
        Mp[k] = _cross(R @ (params.pendulum_joint_offset[k] + local), F[k])
        dMp[k] = _cross(R @ d_local, F[k])
    return Mp, dMp


def _pendulum_loads(params, motion):
    g = np.array([0.0, params.g, 0.0])
    return params.pendulum_mass[:, None] * (motion.a_m + g)


def pendulum_residual(params: HcdrParams, q, theta, motion: ArmMotion | None = None, M_arm=None):
    """``[sum M_y, sum M_x]`` for pendulum angles ``theta``.

    Own pendulum rates are zero at the candidate angle, so the pendulum
    angular-momentum term vanishes.
    """
    motion = motion or ArmMotion()
    M_arm = arm_reaction_moment(params, q, motion) if M_arm is None else M_arm
    Mp, _ = _pendulum_terms(params, kin.platform_rotation(q), np.asarray(theta, dtype=float),
                            _pendulum_loads(params, motion))
    total = M_arm + Mp.sum(axis=0)
    return np.array([total[1], total[0]])


def pendulum_equilibrium(params: HcdrParams, q, motion: ArmMotion | None = None, theta0=(0.0, 0.0),
                         max_iter=100, tol=1e-12) -> PendulumSolution:
    """Pendulum angles that cancel the reaction moment on the platform.

    Gauss-Newton with minimum-norm steps started at ``theta0``. The balance
    has a one-parameter family of solutions in the static case, so the
    minimum-norm step picks the member closest to the start. Backtracking
    keeps the squared residual nonincreasing.
    """
    motion = motion or ArmMotion()
    M_arm = arm_reaction_moment(params, q, motion)
    theta = np.array(theta0, dtype=float)
    R = kin.platform_rotation(q)
    F = _pendulum_loads(params, motion)

    def evaluate(th):
        Mp, dMp = _pendulum_terms(params, R, th, F)
        total = M_arm + Mp.sum(axis=0)
        r = np.array([total[1], total[0]])
        Jr = np.array([[dMp[0, 1], dMp[1, 1]], [dMp[0, 0], dMp[1, 0]]])
        return r, Jr

    r, Jr = evaluate(theta)
    f = r @ r
    for it in range(1, max_iter + 1):
        if np.sqrt(f) <= tol:
            return PendulumSolution(theta, r, True, it - 1)
        step = -pseudo_inverse(Jr)[0] @ r
        grad = Jr.T @ r
        if np.linalg.norm(step) < 1e-15 or np.linalg.norm(grad) <= _STATIONARY * np.linalg.norm(Jr) * np.sqrt(f):
            # stationary least-squares point: the moments cannot be cancelled exactly
            return PendulumSolution(theta, r, True, it - 1)
        lam = 1.0
        while lam > 1e-8:
            cand = theta + lam * step
            r_c, J_c = evaluate(cand)
            if r_c @ r_c < f:
                break
            lam *= 0.5
        else:
            stationary = np.linalg.norm(grad) <= 1e-6 * np.linalg.norm(Jr) * np.sqrt(f)
            return PendulumSolution(theta, r, stationary, it)
        theta, r, Jr, f = cand, r_c, J_c, r_c @ r_c
    return PendulumSolution(theta, r, np.sqrt(f) <= tol, max_iter)


# ---------------------------------------------------------------------------
# planner


@dataclass
class PlanResult:
    time: np.ndarray  # (n,)
    q: np.ndarray  # (n, 11)
    qd: np.ndarray  # (n, 11)
    p_e: np.ndarray  # (n, 3)
    cost: np.ndarray  # (n,)
    residual: np.ndarray  # (n,) |pd_e - J_e qd_A|
    clamped: np.ndarray  # (n,) bool, any clamp fired at this step
    rank: np.ndarray  # (n,) task Jacobian rank
    method: str
    duration: float = 0.0
    pendulum_failures: int = 0
    timings: dict = field(default_factory=dict)

    @property
    def q_A(self):
        return self.q[:, kin.IDX_A]

    @property
    def qd_A(self):
        return self.qd[:, kin.IDX_A]

    @property
    def q_U(self):
        return self.q[:, kin.IDX_U]

    @property
    def qd_U(self):
        return self.qd[:, kin.IDX_U]

    @property
    def theta_p(self):
        return self.q[:, kin.IDX_P]

    def __len__(self):
        return len(self.time)


def nominal(q):
    """Copy of ``q`` with the unactuated coordinates and yaw at zero."""
    out = np.array(q, dtype=float)
    out[kin.IDX_U] = 0.0
    out[kin.IDX_GAMMA] = 0.0
    return out


def in_plane_cable_bias(params: HcdrParams, q):
    """Nominal cable force on ``(p_mx, p_my)`` from the optimal tensions at the in-plane pose."""
    q_plane = np.zeros(kin.N_Q)
    q_plane[:2] = q[:2]
    sol = ct.optimal_tensions(params, q_plane)
    tau = np.zeros(kin.N_Q)
    tau[:2] = (sol.A_m3 @ sol.T_opt)[:2]
    return tau, sol


def pulse_vector(t, channels, n=kin.N_Q):
    """Half-open rectangular pulses; channel indices are 1-based."""
    out = np.zeros(n)
    for ch in channels:
        if ch.t_on <= t < ch.t_off:
            out[ch.index - 1] += ch.amplitude
    return out


def _arm_rates(params, q, qd):
    r = kin.frame_rates(params, q, qd)
    return (np.array(qd[0:3]), np.array([r.v_ac1, r.v_ac2, r.v_ac3]),
            np.array([r.w_ac1, r.w_ac2, r.w_ac3]))


def plan(scenario: ScenarioConfig, params: HcdrParams, method: str | None = None,
         progress=None) -> PlanResult:
    """Run the planner over the scenario's waypoint schedule.

    Each step samples the shaped reference, evaluates the dynamics at the
    current configuration, solves the in-plane cable tensions, updates the
    actuated and unactuated velocities, rebalances the pendulums, logs the
    torque cost, then integrates with explicit Euler and applies the
    velocity, velocity-increment and position limits.
    """
    method = (method or scenario.method).lower()
    if method not in ("toaj", "toauj"):
        raise ValueError(f"unknown method '{method}'")
    Ts = scenario.sample_time
    K_a = np.asarray(scenario.k_dp_a, dtype=float)
    K_u = np.zeros(3) if method == "toaj" else np.asarray(scenario.k_dp_u, dtype=float)
    lim = scenario.limits
    A, U = kin.IDX_A, kin.IDX_U
    segments = traj.segment_schedule(scenario.waypoints, scenario.waypoint_times, Ts)
    n_total = sum(s.n_steps for s in segments) + 1

    t_arr = np.empty(n_total)
    q_arr = np.empty((n_total, kin.N_Q))
    qd_arr = np.empty((n_total, kin.N_Q))
    pe_arr = np.empty((n_total, 3))
    cost = np.empty(n_total)
    resid = np.empty(n_total)
    clamped = np.zeros(n_total, dtype=bool)
    rank = np.empty(n_total, dtype=int)
    timings = dict.fromkeys(("dynamics", "tension", "update", "pendulum", "cost"), 0.0)

    q = np.array(scenario.initial_q, dtype=float)
    q[kin.IDX_GAMMA] = 0.0
    qd_prev = np.zeros(kin.N_Q)
    pd_e_meas = np.array(scenario.waypoint_velocities[0], dtype=float)
    prev_rates = None
    pend_fail = 0
    row = 0
    t0 = time.perf_counter()

    for i_seg, seg in enumerate(segments):
        last = i_seg == len(segments) - 1
        k_end = seg.n_steps + (1 if last else 0)
        for k in range(1, k_end + 1):
            step = row + 1
            t = scenario.t_start + row * Ts
            try:
                q_nom = nominal(q)
                pose = kin.forward_kinematics(params, q_nom)
                p_e = pose.p_e
                s = traj.sample(k, seg, p_e, pd_e_meas, scenario.feedback_gain)

                tic = time.perf_counter()
                M = dyn.mass_matrix(params, q)
                C = dyn.coriolis_matrix(params, q, qd_prev)
                G = dyn.gravity_vector(params, q)
                timings["dynamics"] += time.perf_counter() - tic

                tic = time.perf_counter()
                tau_cable, _ = in_plane_cable_bias(params, q)
                timings["tension"] += time.perf_counter() - tic

                tic = time.perf_counter()
                tau_d = pulse_vector(t, scenario.disturbance)
                rt = dyn.reduced_terms(params, q, qd_prev, tau_d - tau_cable, M=M, C=C, G=G)
                J = kin.task_jacobian(params, q_nom)
                Jp, rk = pseudo_inverse(J)
                if method == "toaj":
                    bias_a = (G + tau_d - tau_cable)[A]
                    qd_a = toaj_step(J, qd_prev[A], s.pd_cmd, Ts, K_a, M[np.ix_(A, A)],
                                     C[np.ix_(A, A)], bias_a, J_pinv=Jp)
                    _, xi_u = schur_terms(rt.M_AU, rt.F_A, rt.F_U)
                    qd_u = qd_prev[U] - Ts * K_u * qd_prev[U] - Ts * xi_u
                else:
                    qd_a, qd_u, _, _ = toauj_step(J, qd_prev[A], qd_prev[U], s.pd_cmd, Ts, K_a, K_u,
                                                  rt.M_AU, rt.F_A, rt.F_U, J_pinv=Jp)
                qd_a_raw = qd_a
                qd_a = np.clip(qd_a, lim.qd_min, lim.qd_max)
                qd_a = qd_prev[A] + np.clip(qd_a - qd_prev[A], lim.dqd_min, lim.dqd_max)
                was_clamped = not np.array_equal(qd_a, qd_a_raw)
                timings["update"] += time.perf_counter() - tic

                # pendulum balance from the current arm motion
                tic = time.perf_counter()
                qd_nom = np.zeros(kin.N_Q)
                qd_nom[A] = qd_a
                rates = _arm_rates(params, q_nom, qd_nom)
                if prev_rates is None:
                    motion = ArmMotion(w_ac=rates[2])
                else:
                    motion = ArmMotion(a_m=(rates[0] - prev_rates[0]) / Ts,
                                       v_dot_ac=(rates[1] - prev_rates[1]) / Ts,
                                       w_ac=rates[2], w_dot_ac=(rates[2] - prev_rates[2]) / Ts)
                prev_rates = rates
                psol = pendulum_equilibrium(params, q_nom, motion, theta0=q[kin.IDX_P])
                if not psol.converged:
                    pend_fail += 1
                timings["pendulum"] += time.perf_counter() - tic

                tic = time.perf_counter()
                Jd = kin.task_jacobian_dot(params, q_nom, _embed_a(qd_prev[A]))
                qdd_a = Jp @ (s.pdd_cmd - Jd @ qd_prev[A])
                qdd_u = (qd_u - qd_prev[U]) / Ts
                cost[row], _ = torque_cost(rt.M_AU, qdd_a, qdd_u, rt.F_A, rt.F_U)
                timings["cost"] += time.perf_counter() - tic
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise PlanningError(step, exc) from exc

            qd = np.zeros(kin.N_Q)
            qd[A], qd[U] = qd_a, qd_u
            qd[kin.IDX_P] = (psol.theta - q[kin.IDX_P]) / Ts

            t_arr[row] = t
            q_arr[row], qd_arr[row] = q, qd
            pe_arr[row] = p_e
            resid[row] = np.linalg.norm(s.pd_cmd - J @ qd_a)
            rank[row] = rk
            clamped[row] = was_clamped
            row += 1
            if progress is not None:
                progress(row, n_total)

            q = q + qd * Ts
            q[kin.IDX_P] = psol.theta
            q[kin.IDX_GAMMA] = 0.0
            if lim.q_max is not None or lim.q_min is not None:
                q_c = np.clip(q, lim.q_min if lim.q_min is not None else -np.inf,
                              lim.q_max if lim.q_max is not None else np.inf)
                if not np.array_equal(q_c, q):
                    clamped[row - 1] = True
                q = q_c
            pd_e_meas = J @ qd_a
            qd_prev = qd
            if not np.all(np.isfinite(q)):
                raise PlanningError(step, "non-finite state")
            if not last and k < k_end:
                p_next_e = kin.end_effector(params, nominal(q))
                if np.linalg.norm(seg.p_next - p_next_e) <= lim.eps_a:
                    break
    if row < n_total:  # early switches shorten the run
        t_arr, q_arr, qd_arr, pe_arr = t_arr[:row], q_arr[:row], qd_arr[:row], pe_arr[:row]
        cost, resid, clamped, rank = cost[:row], resid[:row], clamped[:row], rank[:row]
    if pend_fail:
        warnings.warn(f"pendulum balance did not converge at {pend_fail} steps", RuntimeWarning)
    return PlanResult(t_arr, q_arr, qd_arr, pe_arr, cost, resid, clamped, rank, method,
                      duration=time.perf_counter() - t0, pendulum_failures=pend_fail,
                      timings=timings)


def _embed_a(qd_a):
    qd = np.zeros(kin.N_Q)
    qd[kin.IDX_A] = qd_a
    return qd
