"""Rotation chains, body positions/velocities, cable geometry and task Jacobians.

Generalized coordinates (0-based indices)::

    0 p_mx  1 p_my  2 p_mz  3 alpha_m  4 beta_m  5 gamma_m
    6 theta_p1  7 theta_p2  8 theta_a1  9 theta_a2  10 theta_a3

The platform orientation is the intrinsic x-y'-z'' sequence
``R = Rx(alpha) Ry(beta) Rz(gamma)``. Angular velocities returned by
:func:`frame_rates` are expressed in each body's own frame.

The batch helpers (``_chain``, :func:`body_jacobians`) accept ``q`` with any
number of leading dimensions; the public per-state functions take a single
11-vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import HcdrParams

N_Q = 11
IDX_A = np.array([0, 1, 8, 9, 10])  # actuated: p_mx, p_my, theta_a1..3
IDX_U = np.array([2, 3, 4])  # unactuated: p_mz, alpha_m, beta_m
IDX_GAMMA = 5
IDX_P = np.array([6, 7])  # pendulums
IDX_AU = np.concatenate([IDX_A[:2], IDX_U, IDX_A[2:]])  # q[1:5, 9:11] (1-based)

DEGENERATE_CABLE_TOL = 1e-9

_EX, _EY, _EZ = np.eye(3)


class DegenerateCableError(ValueError):
    def __init__(self, index, length):
        self.index = index
        super().__init__(f"degenerate cable {index + 1}: length {length:.3e} m")


@dataclass(frozen=True)
class JointState:
    """Generalized coordinates ``q`` and rates ``qd``, both finite 11-vectors."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        for name in ("q", "qd"):
            v = np.array(getattr(self, name), dtype=float)
            if v.shape != (N_Q,):
                raise ValueError(f"{name} must have {N_Q} entries, got shape {v.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} has non-finite entries")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def q_A(self):
        return self.q[IDX_A]

    @property
    def q_U(self):
        return self.q[IDX_U]

    @property
    def qd_A(self):
        return self.qd[IDX_A]

    @property
    def qd_U(self):
        return self.qd[IDX_U]


def random_states(rng, n, planar=False, rate_scale=1.0):
    """``n`` random ``(q, qd)`` pairs inside the cable-feasible working region.

    Platform offsets stay within a few centimetres of the home pose and tilts
    within 0.2 rad; pendulum and arm angles span a full turn. With ``planar``
    the out-of-plane platform coordinates and yaw are zero.
    """
    q = np.empty((n, N_Q))
    q[:, 0] = rng.uniform(-0.3, 0.3, n)
    q[:, 1] = rng.uniform(-0.15, 0.15, n)
    q[:, 2] = rng.uniform(-0.05, 0.05, n)
    q[:, 3:6] = rng.uniform(-0.2, 0.2, (n, 3))
    q[:, 6:] = rng.uniform(-np.pi, np.pi, (n, 5))
    if planar:
        q[:, 2:6] = 0.0
    qd = rng.normal(0.0, rate_scale, (n, N_Q))
    return q, qd


def rot_x(theta):
    if np.ndim(theta) == 0:
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack([np.stack([one, zero, zero], -1),
                     np.stack([zero, c, -s], -1),
                     np.stack([zero, s, c], -1)], -2)


def rot_y(theta):
    if np.ndim(theta) == 0:
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack([np.stack([c, zero, s], -1),
                     np.stack([zero, one, zero], -1),
                     np.stack([-s, zero, c], -1)], -2)


def rot_z(theta):
    if np.ndim(theta) == 0:
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack([np.stack([c, -s, zero], -1),
                     np.stack([s, c, zero], -1),
                     np.stack([zero, zero, one], -1)], -2)


def _mv(R, v):
    return np.einsum("...ij,...j->...i", R, v)


def _mtv(R, v):
    return np.einsum("...ji,...j->...i", R, v)


def platform_rotation(q):
    q = np.asarray(q, dtype=float)
    return rot_x(q[..., 3]) @ rot_y(q[..., 4]) @ rot_z(q[..., 5])


def body_angular_velocity(q, qd):
    """Platform angular velocity in the platform frame.

    ``w = R^T [da,0,0] + Rz(g)^T Ry(b)^T [0,db,0] + Rz(g)^T [0,0,dg]``
    """
    q, qd = np.asarray(q, dtype=float), np.asarray(qd, dtype=float)
    R = platform_rotation(q)
    Ry, Rz = rot_y(q[..., 4]), rot_z(q[..., 5])
    zero = np.zeros_like(qd[..., 3])
    w = _mtv(R, np.stack([qd[..., 3], zero, zero], -1))
    w = w + _mtv(Rz, _mtv(Ry, np.stack([zero, qd[..., 4], zero], -1)))
    return w + _mtv(Rz, np.stack([zero, zero, qd[..., 5]], -1))


def euler_rate_axes(q):
    """Spatial axes of the three Euler-angle rotations, as columns (3x3).

    The platform's spatial angular velocity is ``euler_rate_axes(q) @ qd[3:6]``.
    Generalized forces on the angles follow from a world-frame moment ``m`` as
    ``euler_rate_axes(q).T @ m``.
    """
    q = np.asarray(q, dtype=float)
    Rx = rot_x(q[..., 3])
    Rxy = Rx @ rot_y(q[..., 4])
    return np.stack([np.broadcast_to(_EX, Rx.shape[:-1]), Rx[..., :, 1], Rxy[..., :, 2]], -1)


# ---------------------------------------------------------------------------
# geometric chain


@dataclass
class FramePose:
    R_g_m: np.ndarray
    p_m: np.ndarray
    p_p1_0: np.ndarray
    p_p2_0: np.ndarray
    p_pc1: np.ndarray
    p_pc2: np.ndarray
    p_a0: np.ndarray
    p_a1: np.ndarray
    p_a2: np.ndarray
    p_a3: np.ndarray
    p_ac1: np.ndarray
    p_ac2: np.ndarray
    p_ac3: np.ndarray

    @property
    def p_e(self):
        return self.p_a3


@dataclass
class FrameRates:
    w_m: np.ndarray
    w_pc1: np.ndarray
    w_pc2: np.ndarray
    w_ac1: np.ndarray
    w_ac2: np.ndarray
    w_ac3: np.ndarray
    v_pc1: np.ndarray
    v_pc2: np.ndarray
    v_ac1: np.ndarray
    v_ac2: np.ndarray
    v_ac3: np.ndarray


@dataclass
class _Chain:
    pose: FramePose
    R_p: list  # pendulum body orientations (world)
    R_a: list  # link orientations (world)
    R_a_local: list  # link orientations relative to the platform
    axes: np.ndarray  # (..., 11, 3) spatial joint axes
    origins: np.ndarray  # (..., 11, 3) points on the joint axes


def _chain(params: HcdrParams, q) -> _Chain:
    q = np.asarray(q, dtype=float)
    R = platform_rotation(q)
    p_m = q[..., 0:3]

    R_p = [R @ rot_x(q[..., 6]), R @ rot_x(q[..., 7])]
    p_p0 = [p_m + _mv(R, params.pendulum_joint_offset[k]) for k in (0, 1)]
    p_pc = [p_p0[k] + _mv(R_p[k], params.pendulum_com_offset[k]) for k in (0, 1)]

    Ra1 = rot_y(q[..., 8])
    Ra2 = Ra1 @ rot_z(q[..., 9])
    Ra3 = Ra2 @ rot_z(q[..., 10])
    R_a_local = [Ra1, Ra2, Ra3]
    R_a = [R @ Rl for Rl in R_a_local]
    p_a0 = p_m + _mv(R, params.arm_base_offset)
    joints = [p_a0]
    coms = []
    for j in range(3):
        coms.append(joints[j] + _mv(R_a[j], params.link_com_offset[j]))
        joints.append(joints[j] + _mv(R_a[j], params.link_joint_offset[j]))

    shape = q.shape[:-1]
    axes = np.zeros(shape + (N_Q, 3))
    origins = np.zeros(shape + (N_Q, 3))
    axes[..., 0:3, :] = np.eye(3)
    axes[..., 3:6, :] = np.swapaxes(euler_rate_axes(q), -1, -2)
    origins[..., 3:6, :] = p_m[..., None, :]
    axes[..., 6, :] = R[..., :, 0]
    axes[..., 7, :] = R[..., :, 0]
    origins[..., 6, :] = p_p0[0]
    origins[..., 7, :] = p_p0[1]
    axes[..., 8, :] = R[..., :, 1]
    axes[..., 9, :] = R_a[0][..., :, 2]
    axes[..., 10, :] = R_a[1][..., :, 2]
    origins[..., 8, :] = joints[0]
    origins[..., 9, :] = joints[1]
    origins[..., 10, :] = joints[2]

    pose = FramePose(R, p_m, p_p0[0], p_p0[1], p_pc[0], p_pc[1], *joints, *coms)
    return _Chain(pose, R_p, R_a, R_a_local, axes, origins)


# body order: platform, pendulum 1, pendulum 2, link 1, link 2, link 3
_BASE = [0, 1, 2, 3, 4, 5]
BODY_JOINTS = (
    _BASE,
    _BASE + [6],
    _BASE + [7],
    _BASE + [8],
    _BASE + [8, 9],
    _BASE + [8, 9, 10],
)


def body_masses(params):
    return np.array([params.platform_mass, *params.pendulum_mass, *params.link_mass])


def body_inertias(params):
    """Principal moments (6, 3) in body frames; pendulums only about x."""
    out = np.zeros((6, 3))
    out[0] = params.platform_inertia
    out[1, 0], out[2, 0] = params.pendulum_inertia
    out[3:] = params.link_inertia
    return out


@dataclass
class BodyJacobians:
    com: np.ndarray  # (..., 6, 3)
    R: np.ndarray  # (..., 6, 3, 3)
    Jv: np.ndarray  # (..., 6, 3, 11)
    Jw: np.ndarray  # (..., 6, 3, 11), spatial angular velocity


def _joint_mask():
    mask = np.zeros((6, N_Q))
    for b, joints in enumerate(BODY_JOINTS):
        mask[b, joints] = 1.0
    return mask


_MASK = _joint_mask()
_REVOLUTE = np.arange(N_Q) >= 3


def body_jacobians(params: HcdrParams, q) -> BodyJacobians:
    """COM linear and spatial angular Jacobians of the six rigid bodies."""
    ch = _chain(params, q)
    pose = ch.pose
    com = np.stack([pose.p_m, pose.p_pc1, pose.p_pc2, pose.p_ac1, pose.p_ac2, pose.p_ac3], -2)
    R = np.stack([pose.R_g_m, *ch.R_p, *ch.R_a], -3)
    axes = ch.axes[..., None, :, :]  # (..., 1, 11, 3)
    arm = com[..., :, None, :] - ch.origins[..., None, :, :]  # (..., 6, 11, 3)
    lin = np.where(_REVOLUTE[:, None], np.cross(axes, arm), axes)
    ang = np.where(_REVOLUTE[:, None], axes, 0.0)
    Jv = np.swapaxes(lin * _MASK[..., None], -1, -2)
    Jw = np.swapaxes(ang * _MASK[..., None], -1, -2)
    return BodyJacobians(com, R, Jv, Jw)


def forward_kinematics(params: HcdrParams, q) -> FramePose:
    return _chain(params, q).pose


def end_effector(params: HcdrParams, q):
    return _chain(params, q).pose.p_a3


def frame_rates(params: HcdrParams, q, qd) -> FrameRates:
    """Body-frame angular velocities and COM linear velocities.

    Angular velocities follow the closed-form compositions (platform, then
    each pendulum/link relative rotation); linear velocities are obtained by
    propagating rigid-body velocities along the chain.
    """
    q, qd = np.asarray(q, dtype=float), np.asarray(qd, dtype=float)
    ch = _chain(params, q)
    pose = ch.pose
    R = pose.R_g_m
    w_m = body_angular_velocity(q, qd)
    zero = np.zeros_like(qd[..., 0])

    def e(i, v):
        return np.stack([v if i == 0 else zero, v if i == 1 else zero, v if i == 2 else zero], -1)

    w_pc = [_mtv(rot_x(q[..., 6 + k]), w_m) + e(0, qd[..., 6 + k]) for k in (0, 1)]
    Ry, Rz2, Rz3 = rot_y(q[..., 8]), rot_z(q[..., 9]), rot_z(q[..., 10])
    w1 = w_m + e(1, qd[..., 8])
    w_ac1 = _mtv(Ry, w_m) + e(1, qd[..., 8])
    w_ac2 = _mtv(Ry @ Rz2, w1) + e(2, qd[..., 9])
    w_ac3 = _mtv(Ry @ Rz2 @ Rz3, w1) + _mtv(Rz2 @ Rz3, e(2, qd[..., 9])) + e(2, qd[..., 10])

    # spatial angular velocities for velocity propagation
    ws = _mv(R, w_m)
    ws_p = [_mv(ch.R_p[k], w_pc[k]) for k in (0, 1)]
    ws_a = [_mv(ch.R_a[0], w_ac1), _mv(ch.R_a[1], w_ac2), _mv(ch.R_a[2], w_ac3)]
    v_m = qd[..., 0:3]
    v_p0 = [v_m + np.cross(ws, p - pose.p_m) for p in (pose.p_p1_0, pose.p_p2_0)]
    v_pc = [v_p0[k] + np.cross(ws_p[k], c - o)
            for k, (c, o) in enumerate(((pose.p_pc1, pose.p_p1_0), (pose.p_pc2, pose.p_p2_0)))]
    joints = [pose.p_a0, pose.p_a1, pose.p_a2, pose.p_a3]
    coms = [pose.p_ac1, pose.p_ac2, pose.p_ac3]
    v_joint = v_m + np.cross(ws, pose.p_a0 - pose.p_m)
    v_ac = []
    for j in range(3):
        v_ac.append(v_joint + np.cross(ws_a[j], coms[j] - joints[j]))
        v_joint = v_joint + np.cross(ws_a[j], joints[j + 1] - joints[j])
    return FrameRates(w_m, w_pc[0], w_pc[1], w_ac1, w_ac2, w_ac3, v_pc[0], v_pc[1], *v_ac)


# ---------------------------------------------------------------------------
# cables


@dataclass
class CableGeometry:
    L: np.ndarray  # (12,)
    L_hat: np.ndarray  # (12, 3)
    A_m6: np.ndarray  # (6, 12)
    moment_arms: np.ndarray  # (12, 3) R r_i


def cable_geometry(params: HcdrParams, q) -> CableGeometry:
    """Cable lengths, unit vectors (platform to frame) and the 6x12 structure matrix."""
    q = np.asarray(q, dtype=float)
    R = platform_rotation(q)
    arms = params.platform_anchors @ R.T
    vec = params.frame_anchors - q[0:3] - arms
    L = np.linalg.norm(vec, axis=1)
    bad = np.flatnonzero(L <= DEGENERATE_CABLE_TOL)
    if bad.size:
        raise DegenerateCableError(int(bad[0]), float(L[bad[0]]))
    L_hat = vec / L[:, None]
    A = np.vstack([L_hat.T, np.cross(arms, L_hat).T])
    return CableGeometry(L, L_hat, A, arms)


def cable_length_gradient(params: HcdrParams, q, geom: CableGeometry | None = None):
    """dL_i/dq as a (12, 11) array (nonzero only in the platform pose columns)."""
    geom = geom or cable_geometry(params, q)
    E = euler_rate_axes(q)
    out = np.zeros((12, N_Q))
    out[:, 0:3] = -geom.L_hat
    out[:, 3:6] = -(geom.A_m6[3:6].T @ E)
    return out


# ---------------------------------------------------------------------------
# task Jacobian


def task_jacobian(params: HcdrParams, q):
    """Jacobian of the end-effector position w.r.t. q_A (3x5)."""
    ch = _chain(params, q)
    p_e = ch.pose.p_a3
    J = np.empty((3, 5))
    J[:, 0] = _EX
    J[:, 1] = _EY
    for c, j in enumerate((8, 9, 10), start=2):
        J[:, c] = np.cross(ch.axes[j], p_e - ch.origins[j])
    return J


def task_jacobian_dot(params: HcdrParams, q, qd):
    """Time derivative of :func:`task_jacobian` along (q, qd)."""
    q, qd = np.asarray(q, dtype=float), np.asarray(qd, dtype=float)
    ch = _chain(params, q)
    pose = ch.pose
    ax = ch.axes
    w = euler_rate_axes(q) @ qd[3:6]  # platform, spatial
    w1 = w + ax[8] * qd[8]
    w2 = w1 + ax[9] * qd[9]
    w3 = w2 + ax[10] * qd[10]
    v_a0 = qd[0:3] + np.cross(w, pose.p_a0 - pose.p_m)
    v_a1 = v_a0 + np.cross(w1, pose.p_a1 - pose.p_a0)
    v_a2 = v_a1 + np.cross(w2, pose.p_a2 - pose.p_a1)
    v_e = v_a2 + np.cross(w3, pose.p_a3 - pose.p_a2)
    Jd = np.zeros((3, 5))
    for c, (j, w_parent, o, v_o) in enumerate(
            ((8, w, pose.p_a0, v_a0), (9, w1, pose.p_a1, v_a1), (10, w2, pose.p_a2, v_a2)), start=2):
        a = ax[j]
        a_dot = np.cross(w_parent, a)
        Jd[:, c] = np.cross(a_dot, pose.p_a3 - o) + np.cross(a, v_e - v_o)
    return Jd
