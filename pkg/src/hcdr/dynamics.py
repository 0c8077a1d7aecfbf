"""Lagrangian dynamics of the 11-coordinate platform/pendulum/arm tree.

The mass matrix is assembled from body Jacobians,
``M = sum_b m_b Jv_b^T Jv_b + Jw_b^T (R_b I_b R_b^T) Jw_b``, so it is
symmetric positive definite wherever the Euler-angle map is regular. The
Coriolis matrix uses Christoffel symbols of a central-difference mass-matrix
derivative, which makes ``dM/dt - 2C`` skew-symmetric up to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kinematics as kin
from .config import HcdrParams

FD_STEP = 1e-6
_UP = 1  # world y is vertical


def _body_frame_jacobians(params, q):
    bj = kin.body_jacobians(params, q)
    # angular Jacobians in body frames: w_body = R^T Jw qd
    return bj.Jv, np.swapaxes(bj.R, -1, -2) @ bj.Jw


def mass_matrix(params: HcdrParams, q):
    """Generalized inertia matrix; ``q`` may carry leading batch dimensions."""
    m = kin.body_masses(params)
    inertia = kin.body_inertias(params)
    Jv, Jw_b = _body_frame_jacobians(params, q)
    Jv_s = Jv * np.sqrt(m)[:, None, None]
    Jw_s = Jw_b * np.sqrt(inertia)[..., None]
    shape = Jv_s.shape[:-3] + (-1, kin.N_Q)
    stacked = np.concatenate([Jv_s.reshape(shape), Jw_s.reshape(shape)], -2)
    return np.swapaxes(stacked, -1, -2) @ stacked


def mass_matrix_derivatives(params: HcdrParams, q, h=FD_STEP):
    """``dM[k] = dM/dq_k`` by central differences, shape (11, 11, 11)."""
    q = np.asarray(q, dtype=float)
    E = h * np.eye(kin.N_Q)
    Ms = mass_matrix(params, np.concatenate([q + E, q - E]))
    return (Ms[: kin.N_Q] - Ms[kin.N_Q:]) / (2 * h)


def coriolis_matrix(params: HcdrParams, q, qd, dM=None):
    """Christoffel-form Coriolis/centrifugal matrix C(q, qd)."""
    qd = np.asarray(qd, dtype=float)
    if dM is None:
        dM = mass_matrix_derivatives(params, q)
    # dM[k, i, j] = dM_ij/dq_k
    t1 = np.einsum("kij,k->ij", dM, qd)
    t2 = np.einsum("jik,k->ij", dM, qd)
    t3 = np.einsum("ijk,k->ij", dM, qd)
    return 0.5 * (t1 + t2 - t3)


def coriolis_vector(params: HcdrParams, q, qd, h=FD_STEP):
    """``C(q, qd) @ qd`` by body-wise Newton-Euler, without forming C.

    Jacobian rates along ``qd`` come from one central difference, which costs
    three Jacobian evaluations instead of the 22 needed for the full matrix.
    """
    q, qd = np.asarray(q, dtype=float), np.asarray(qd, dtype=float)
    Jv, Jw = _body_frame_jacobians(params, np.stack([q, q + h * qd, q - h * qd]))
    m = kin.body_masses(params)
    inertia = kin.body_inertias(params)
    a = (Jv[1] - Jv[2]) @ qd / (2 * h)  # (6, 3) COM acceleration with qdd = 0
    w = Jw[0] @ qd
    alpha = (Jw[1] - Jw[2]) @ qd / (2 * h)
    torque = inertia * alpha + np.cross(w, inertia * w)
    return np.einsum("bki,bk->i", Jv[0], m[:, None] * a) + np.einsum("bki,bk->i", Jw[0], torque)


def dynamics_terms(params: HcdrParams, q, qd, h=FD_STEP):
    """``(M, C qd, G)`` from a single batched Jacobian evaluation."""
    q, qd = np.asarray(q, dtype=float), np.asarray(qd, dtype=float)
    bj = kin.body_jacobians(params, np.stack([q, q + h * qd, q - h * qd]))
    m = kin.body_masses(params)
    inertia = kin.body_inertias(params)
    Jv = bj.Jv
    Jw = np.swapaxes(bj.R, -1, -2) @ bj.Jw
    stacked = np.concatenate([(Jv[0] * np.sqrt(m)[:, None, None]).reshape(-1, kin.N_Q),
                              (Jw[0] * np.sqrt(inertia)[..., None]).reshape(-1, kin.N_Q)])
    M = stacked.T @ stacked
    a = (Jv[1] - Jv[2]) @ qd / (2 * h)
    w = Jw[0] @ qd
    alpha = (Jw[1] - Jw[2]) @ qd / (2 * h)
    torque = inertia * alpha + np.cross(w, inertia * w)
    cqd = np.einsum("bki,bk->i", Jv[0], m[:, None] * a) + np.einsum("bki,bk->i", Jw[0], torque)
    G = params.g * (m @ Jv[0, :, _UP, :])
    return M, cqd, G


def kinetic_energy(params: HcdrParams, q, qd):
    """Kinetic energy summed body by body from COM and angular velocities."""
    r = kin.frame_rates(params, q, qd)
    m = kin.body_masses(params)
    inertia = kin.body_inertias(params)
    v = [np.asarray(qd, dtype=float)[..., 0:3], r.v_pc1, r.v_pc2, r.v_ac1, r.v_ac2, r.v_ac3]
    w = [r.w_m, r.w_pc1, r.w_pc2, r.w_ac1, r.w_ac2, r.w_ac3]
    T = 0.0
    for b in range(6):
        T = T + 0.5 * m[b] * np.sum(v[b] ** 2, -1) + 0.5 * np.sum(inertia[b] * w[b] ** 2, -1)
    return T


def _cable_stiffness(params, L0, stiffness):
    return params.cable_ea / L0 if stiffness is None else np.asarray(stiffness, dtype=float)


def potential_energy(params: HcdrParams, q, L0=None, stiffness=None):
    """Gravitational potential ``g * sum m_b y_b`` plus optional cable strain energy.

    When ``L0`` (12 unstretched lengths) is given, ``1/2 sum k_i (L_i - L0_i)^2``
    with ``k_i = EA_i / L0_i`` is added; ``nan`` entries are skipped.
    """
    pose = kin.forward_kinematics(params, q)
    m = kin.body_masses(params)
    coms = [pose.p_m, pose.p_pc1, pose.p_pc2, pose.p_ac1, pose.p_ac2, pose.p_ac3]
    V = params.g * sum(mb * c[..., _UP] for mb, c in zip(m, coms))
    if L0 is None:
        return V
    L0 = np.asarray(L0, dtype=float)
    L = kin.cable_geometry(params, q).L
    k = _cable_stiffness(params, L0, stiffness)
    return V + 0.5 * float(np.nansum(k * (L - L0) ** 2))


def gravity_vector(params: HcdrParams, q, include_cables=False, L0=None, stiffness=None):
    """Gradient of :func:`potential_energy`.

    The cable term is only added with ``include_cables``; in the force balance
    the cables enter through the structure matrix instead, so the default
    leaves them out.
    """
    bj = kin.body_jacobians(params, q)
    m = kin.body_masses(params)
    G = params.g * np.einsum("b,...bi->...i", m, bj.Jv[..., :, _UP, :])
    if not include_cables:
        return G
    if L0 is None:
        raise ValueError("include_cables requires L0")
    geom = kin.cable_geometry(params, q)
    L0 = np.asarray(L0, dtype=float)
    k = _cable_stiffness(params, L0, stiffness)
    tension = np.where(np.isnan(L0), 0.0, k * (geom.L - L0))
    return G + kin.cable_length_gradient(params, q, geom).T @ tension


class IllConditionedError(np.linalg.LinAlgError):
    pass


def forward_dynamics(params: HcdrParams, q, qd, tau, tau_d=None, locked=(), cond_max=1e12):
    """Accelerations from ``M qdd + C qd + G + tau_d = tau``.

    Coordinates listed in ``locked`` get zero acceleration; their rows and
    columns are removed before solving.
    """
    q, qd, tau = (np.asarray(a, dtype=float) for a in (q, qd, tau))
    free = np.setdiff1d(np.arange(kin.N_Q), np.asarray(locked, dtype=int))
    M = mass_matrix(params, q)[np.ix_(free, free)]
    rhs = tau - coriolis_vector(params, q, qd) - gravity_vector(params, q)
    if tau_d is not None:
        rhs = rhs - np.asarray(tau_d, dtype=float)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > cond_max:
        raise IllConditionedError(f"mass matrix ill-conditioned (cond {cond:.3e})")
    qdd = np.zeros(kin.N_Q)
    qdd[free] = np.linalg.solve(M, rhs[free])
    return qdd


def inverse_dynamics(params: HcdrParams, q, qd, qdd, tau_d=None):
    """Generalized forces that produce ``qdd``; the inverse of :func:`forward_dynamics`."""
    q, qd, qdd = (np.asarray(a, dtype=float) for a in (q, qd, qdd))
    tau = mass_matrix(params, q) @ qdd + coriolis_vector(params, q, qd) + gravity_vector(params, q)
    return tau if tau_d is None else tau + np.asarray(tau_d, dtype=float)


# ---------------------------------------------------------------------------
# actuated / unactuated partition


# positions of the actuated and unactuated blocks inside the 8x8 reduced system
SUB_A = np.array([0, 1, 5, 6, 7])
SUB_U = np.array([2, 3, 4])


@dataclass
class ReducedTerms:
    M_AU: np.ndarray  # (8, 8)
    F_A: np.ndarray  # (5,)
    F_U: np.ndarray  # (3,)

    @property
    def M_AA(self):
        return self.M_AU[np.ix_(SUB_A, SUB_A)]

    @property
    def M_AU_off(self):
        """Actuated-unactuated coupling block (5x3)."""
        return self.M_AU[np.ix_(SUB_A, SUB_U)]

    @property
    def M_UA(self):
        return self.M_AU[np.ix_(SUB_U, SUB_A)]

    @property
    def M_UU(self):
        return self.M_AU[np.ix_(SUB_U, SUB_U)]


def reduced_terms(params: HcdrParams, q, qd, tau_d=None, M=None, C=None, G=None,
                  gamma_tol=1e-12) -> ReducedTerms:
    """Mass block and bias vectors over the actuated and unactuated coordinates.

    ``M_AU`` keeps ``(p_mx, p_my, p_mz, alpha, beta, theta_a1, theta_a2,
    theta_a3)``. The bias vectors use the diagonal velocity blocks only:
    ``F_A = C_AA qd_A + G_A + tau_dA`` and ``F_U = C_UU qd_U + G_U + tau_dU``.
    Cable forces are not part of ``G`` here.
    """
    q, qd = np.asarray(q, dtype=float), np.asarray(qd, dtype=float)
    if abs(q[kin.IDX_GAMMA]) > gamma_tol:
        raise ValueError(f"reduced model needs gamma_m = 0, got {q[kin.IDX_GAMMA]:.3e}")
    M = mass_matrix(params, q) if M is None else M
    C = coriolis_matrix(params, q, qd) if C is None else C
    G = gravity_vector(params, q) if G is None else G
    bias = G if tau_d is None else G + np.asarray(tau_d, dtype=float)
    A, U, AU = kin.IDX_A, kin.IDX_U, kin.IDX_AU
    return ReducedTerms(
        M_AU=M[np.ix_(AU, AU)],
        F_A=C[np.ix_(A, A)] @ qd[A] + bias[A],
        F_U=C[np.ix_(U, U)] @ qd[U] + bias[U],
    )
