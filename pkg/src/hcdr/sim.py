"""Closed-loop plant simulation of the full rigid-body model under cable actuation.

The plant integrates ``M qdd + C qd + G + tau_d = Q`` with fixed-step RK4. Yaw
is held at zero by removing its row and column. Generalized forces ``Q``:

* upper cables: elastic members ``EA/L0 (L - L0)`` whose unstretched length
  is commanded from the planned platform pose;
* lower cables: constant-force members at the planned optimal tension plus
  the controller's increment;
* pendulum and arm joints: controller torques.

Cable wrenches are applied per member through the full 6x12 structure
matrix, so they also act on ``p_mz``, ``alpha`` and ``beta``.
"""
from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import cable_tension as ct
from . import control as ctl
from . import dynamics as dyn
from . import kinematics as kin
from .config import HcdrParams, ScenarioConfig
from .redundancy import PlanResult, nominal, pulse_vector

BLOW_UP = 1e6
LOCKED = (kin.IDX_GAMMA,)
FREE = np.setdiff1d(np.arange(kin.N_Q), LOCKED)


class SimulationBlowUp(RuntimeError):
    def __init__(self, step, norm):
        self.step = step
        super().__init__(f"plant blew up at step {step} (|qd| = {norm:.3e})")


def pulse(t, channels):
    """Disturbance vector (11,) at time ``t``; zero outside ``[t_on, t_off)``."""
    return pulse_vector(t, channels)


@dataclass
class CableCommand:
    """Per-step actuator set points held constant over one control period."""

    L0: np.ndarray  # (2,) upper-group unstretched lengths
    T_lower: np.ndarray  # (2,) lower-group tensions including the increment


@dataclass
class SimTrace:
    time: np.ndarray
    q: np.ndarray  # (n, 11)
    qd: np.ndarray  # (n, 11)
    u: np.ndarray  # (n, 7)
    tensions: np.ndarray  # (n, 4) mean upper-group tensions, lower T3, T4
    p_e: np.ndarray  # (n, 3)
    p_ref: np.ndarray  # (n, 3)
    energy: np.ndarray  # (n,)
    duration: float = 0.0
    timings: dict = field(default_factory=dict)

    @property
    def tracking_error(self):
        return self.p_e - self.p_ref

    @property
    def max_error(self):
        return np.abs(self.tracking_error).max(axis=0)


def cable_member_tensions(params: HcdrParams, q, cmd: CableCommand, geom=None):
    return ct.member_tensions(params, q, cmd.L0[0], cmd.L0[1], cmd.T_lower[0], cmd.T_lower[1],
                              geom)


def total_energy(params: HcdrParams, q, qd, cmd: CableCommand):
    """Kinetic + gravitational + upper-cable strain + lower-cable work potential.

    A constant-force cable pulling with tension ``T`` has potential ``T L``.
    """
    geom = kin.cable_geometry(params, q)
    E = float(dyn.kinetic_energy(params, q, qd) + dyn.potential_energy(params, q))
    for k in (0, 1):
        idx = params.group_index(k)
        stretch = np.maximum(geom.L[idx] - cmd.L0[k], 0.0)
        E += 0.5 * params.ea[k] / cmd.L0[k] * float(np.sum(stretch**2))
    for k in (2, 3):
        E += cmd.T_lower[k - 2] * float(np.sum(geom.L[params.group_index(k)]))
    return E


def accelerations(params: HcdrParams, q, qd, cmd: CableCommand, tau_joint, tau_d):
    """Plant accelerations with yaw locked.

    ``tau_joint`` holds the five joint torques ``[tau_p1, tau_p2, tau_a1..3]``.
    """
    M, cqd, G = dyn.dynamics_terms(params, q, qd)
    geom = kin.cable_geometry(params, q)
    T = cable_member_tensions(params, q, cmd, geom)
    Q = ct.generalized_cable_forces(params, q, T, geom)
    Q[6:] += tau_joint
    rhs = Q - cqd - G - tau_d
    qdd = np.zeros(kin.N_Q)
    qdd[FREE] = np.linalg.solve(M[np.ix_(FREE, FREE)], rhs[FREE])
    return qdd


def rk4_step(params, q, qd, h, cmd, tau_joint, tau_d):
    def f(x, v):
        return v, accelerations(params, x, v, cmd, tau_joint, tau_d)

    k1q, k1v = f(q, qd)
    k2q, k2v = f(q + 0.5 * h * k1q, qd + 0.5 * h * k1v)
    k3q, k3v = f(q + 0.5 * h * k2q, qd + 0.5 * h * k2v)
    k4q, k4v = f(q + h * k3q, qd + h * k3v)
    q_new = q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
    qd_new = qd + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return q_new, qd_new


def reference_commands(params: HcdrParams, plan: PlanResult):
    """Upper unstretched lengths, nominal lower tensions and ``A_m3`` along the plan."""
    n = len(plan)
    L0 = np.empty((n, 2))
    T_low = np.empty((n, 2))
    T_up = np.empty((n, 2))
    for k in range(n):
        q_plane = np.zeros(kin.N_Q)
        q_plane[:2] = plan.q[k, :2]
        sol = ct.optimal_tensions(params, q_plane)
        L0[k] = sol.L0
        T_low[k] = sol.T_opt[2:]
        T_up[k] = sol.T_opt[:2]
    return L0, T_low, T_up


def hold_plan(params: HcdrParams, q0, n_steps: int, sample_time: float) -> PlanResult:
    """A plan that holds ``q0`` for ``n_steps`` periods (for static runs)."""
    n = n_steps + 1
    q = np.tile(np.asarray(q0, dtype=float), (n, 1))
    p_e = np.tile(kin.end_effector(params, q0), (n, 1))
    return PlanResult(np.arange(n) * sample_time, q, np.zeros_like(q), p_e, np.zeros(n),
                      np.zeros(n), np.zeros(n, bool), np.zeros(n, int), "hold")


def plan_feedforward(params: HcdrParams, plan: PlanResult):
    """Joint torques ``(n, 5)`` reproducing the planned motion by inverse dynamics.

    Accelerations are central differences of the planned rates. Rows are
    ``[tau_p1, tau_p2, tau_a1, tau_a2, tau_a3]``.
    """
    qdd = np.gradient(plan.qd, plan.time, axis=0)
    return np.array([dyn.inverse_dynamics(params, plan.q[k], plan.qd[k], qdd[k])[6:]
                     for k in range(len(plan))])


def simulate(scenario: ScenarioConfig, params: HcdrParams, plan: PlanResult,
             gains: ctl.ControlGains | None = None, disturbances=None, substeps: int = 1,
             disturb_plant: bool | None = None, initial_q=None, initial_qd=None,
             feedforward=None, progress=None) -> SimTrace:
    """Track a plan in closed loop.

    Parameters
    ----------
    gains : ControlGains, optional
        Defaults to the scenario gains, or zeros when its controller is off.
    disturbances : sequence of PulseChannel, optional
        Applied to the plant only when ``disturb_plant`` is set (default from
        the scenario); the planner already sees the scenario's pulses.
    substeps : int
        RK4 steps per control period; the controller and cable set points are
        held over the period.
    """
    if abs(plan.time[1] - plan.time[0] - scenario.sample_time) > 1e-12:
        raise ValueError("plan and scenario sample times differ")
    if feedforward is not None and np.shape(feedforward) != (len(plan), 5):
        raise ValueError(f"feedforward must have shape ({len(plan)}, 5), got {np.shape(feedforward)}")
    gains = ctl.ControlGains.from_scenario(scenario) if gains is None else gains
    disturbances = scenario.disturbance if disturbances is None else disturbances
    disturb_plant = scenario.disturb_plant if disturb_plant is None else disturb_plant
    Ts = scenario.sample_time
    h = Ts / substeps
    n = len(plan)
    t0 = _time.perf_counter()
    L0_ref, T_low_ref, _ = reference_commands(params, plan)
    timings = {"reference": _time.perf_counter() - t0, "integrate": 0.0, "control": 0.0}

    q = np.array(plan.q[0] if initial_q is None else initial_q, dtype=float)
    qd = np.zeros(kin.N_Q) if initial_qd is None else np.array(initial_qd, dtype=float)
    q[kin.IDX_GAMMA] = qd[kin.IDX_GAMMA] = 0.0
    state = ctl.ControlState(bound=np.full(ctl.N_CHANNELS, scenario.anti_windup))
    ch = ctl.CHANNEL_INDEX

    out_q = np.empty((n, kin.N_Q))
    out_qd = np.empty((n, kin.N_Q))
    out_u = np.empty((n, ctl.N_CHANNELS))
    out_T = np.empty((n, 4))
    out_pe = np.empty((n, 3))
    out_E = np.empty(n)

    for k in range(n):
        tic = _time.perf_counter()
        q_plane = np.zeros(kin.N_Q)
        q_plane[:2] = q[:2]
        A_m3 = ct.reduced_structure_matrix(params, q_plane)
        u, state = ctl.control_step(plan.q[k, ch], q[ch], qd[ch], plan.qd[k, ch], A_m3, Ts,
                                    gains, state)
        cmd = CableCommand(L0_ref[k], T_low_ref[k] + u[:2])
        timings["control"] += _time.perf_counter() - tic

        geom = kin.cable_geometry(params, q)
        T = cable_member_tensions(params, q, cmd, geom)
        out_q[k], out_qd[k], out_u[k] = q, qd, u
        out_T[k] = [T[params.group_index(0)].mean(), T[params.group_index(1)].mean(), *cmd.T_lower]
        out_pe[k] = kin.end_effector(params, q)
        out_E[k] = total_energy(params, q, qd, cmd)
        if progress is not None:
            progress(k + 1, n)
        if k == n - 1:
            break

        tic = _time.perf_counter()
        for j in range(substeps):
            t = plan.time[k] + j * h
            tau_d = pulse(t, disturbances) if disturb_plant else np.zeros(kin.N_Q)
            tau_joint = u[2:] if feedforward is None else u[2:] + feedforward[k]
            q, qd = rk4_step(params, q, qd, h, cmd, tau_joint, tau_d)
        timings["integrate"] += _time.perf_counter() - tic
        norm = float(np.linalg.norm(qd))
        if not np.isfinite(norm) or norm > BLOW_UP:
            raise SimulationBlowUp(k + 2, norm)

    p_ref = plan.p_e.copy()
    return SimTrace(plan.time.copy(), out_q, out_qd, out_u, out_T, out_pe, p_ref, out_E,
                    duration=_time.perf_counter() - t0, timings=timings)


def post_pulse_norms(trace_time, qd_u, t_after):
    """Infinity and 2-norm peaks of the unactuated velocities after ``t_after``."""
    mask = trace_time > t_after
    if not mask.any():
        return {"inf": 0.0, "l2": 0.0}
    return {"inf": float(np.abs(qd_u[mask]).max()),
            "l2": float(np.linalg.norm(qd_u[mask], axis=1).max())}
