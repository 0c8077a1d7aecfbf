"""Four-actuator reduction of the 12-cable platform and its closed-form tensions.

The platform is driven in-plane by four cable groups. Upper groups 1 and 2 are
length-controlled (their tension comes from the elastic law), lower groups 3
and 4 are tension-controlled. With three in-plane wrench equations and four
group tensions there is one redundant input; it is removed by pinning one lower
group at ``t34_max``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kinematics as kin
from .config import N_CABLES, HcdrParams

IN_PLANE_ROWS = [0, 1, 5]  # F_x, F_y, M_z of the 6x12 structure matrix
LOWER = (2, 3)


class InfeasibleTensionError(ValueError):
    """No branch yields nonnegative tensions at this pose."""


class SingularStructureError(np.linalg.LinAlgError):
    pass


@dataclass
class CableSolution:
    A_m3: np.ndarray  # (3, 4)
    T_opt: np.ndarray  # (4,) group tensions (L01, L02, T3, T4 groups)
    L0_1: float
    L0_2: float
    saturated: int  # 2 or 3: which lower group sits at t34_max
    cond: float  # condition number of the 3x3 solve
    dT3: float = 0.0
    dT4: float = 0.0

    @property
    def L0(self):
        return np.array([self.L0_1, self.L0_2])


def reduced_structure_matrix(params: HcdrParams, q, geom: kin.CableGeometry | None = None):
    """In-plane rows of the structure matrix with member columns summed per group."""
    geom = geom or kin.cable_geometry(params, q)
    rows = geom.A_m6[IN_PLANE_ROWS]
    return np.column_stack([rows[:, params.group_index(k)].sum(axis=1) for k in range(4)])


def gravity_wrench(params: HcdrParams):
    return np.array([0.0, params.total_weight, 0.0])


def saturated_branch(params: HcdrParams, A_m3, fixed: int):
    """Tensions with lower group ``fixed`` pinned at ``t34_max``; returns (T, cond)."""
    free = [c for c in range(4) if c != fixed]
    A_bar = A_m3[:, free]
    cond = float(np.linalg.cond(A_bar))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularStructureError(f"reduced structure matrix singular (cond {cond:.3e})")
    rhs = gravity_wrench(params) - A_m3[:, fixed] * params.t34_max
    T = np.empty(4)
    T[free] = np.linalg.solve(A_bar, rhs)
    T[fixed] = params.t34_max
    return T, cond


def unstretched_lengths(params: HcdrParams, q, T_opt, geom: kin.CableGeometry | None = None):
    """``L0 = EA L / (EA + T)`` for the two upper groups, L the group mean length."""
    geom = geom or kin.cable_geometry(params, q)
    T_opt = np.asarray(T_opt, dtype=float)
    if np.any(T_opt[:2] < 0):
        raise ValueError("upper-group tension negative")
    out = []
    for k in (0, 1):
        L = geom.L[params.group_index(k)].mean()
        out.append(params.ea[k] * L / (params.ea[k] + T_opt[k]))
    return tuple(out)


def optimal_tensions(params: HcdrParams, q) -> CableSolution:
    """Group tensions balancing the total weight, one lower group at ``t34_max``.

    Lower group 4 is pinned first. If that forces group 3 above ``t34_max``,
    group 3 is pinned instead and group 4 solved for, so the larger of the two
    lower tensions always equals the limit.

    Raises
    ------
    InfeasibleTensionError
        Both branches need a negative tension.
    """
    geom = kin.cable_geometry(params, q)
    A = reduced_structure_matrix(params, q, geom)
    T, cond = saturated_branch(params, A, fixed=3)
    fixed = 3
    if T[2] >= params.t34_max:
        T, cond = saturated_branch(params, A, fixed=2)
        fixed = 2
    if np.any(T < 0):
        other, _ = saturated_branch(params, A, fixed=5 - fixed)
        raise InfeasibleTensionError(
            f"negative tension at p=({q[0]:.4g}, {q[1]:.4g}): "
            f"branch T{fixed + 1} pinned {np.round(T, 3)}, branch T{6 - fixed} pinned {np.round(other, 3)}")
    if T[2:].max() > params.t34_max * (1 + 1e-12):
        raise InfeasibleTensionError(
            f"lower tension above t34_max at p=({q[0]:.4g}, {q[1]:.4g}): {np.round(T, 3)}")
    L01, L02 = unstretched_lengths(params, q, T, geom)
    return CableSolution(A, T, L01, L02, fixed, cond)


def member_tensions(params: HcdrParams, q, L0_1, L0_2, T3, T4, geom=None):
    """Per-cable tensions (12,): elastic upper members, constant-force lower members.

    Upper members use their own length against the group's unstretched length
    and go slack (zero tension) when shorter than it.
    """
    geom = geom or kin.cable_geometry(params, q)
    T = np.empty(N_CABLES)
    for k, L0 in ((0, L0_1), (1, L0_2)):
        idx = params.group_index(k)
        T[idx] = np.maximum(params.ea[k] / L0 * (geom.L[idx] - L0), 0.0)
    for k, t in ((2, T3), (3, T4)):
        if t < 0:
            raise InfeasibleTensionError(f"lower group {k + 1} tension negative ({t:.4g} N)")
        T[params.group_index(k)] = t
    return T


def cable_forces(params: HcdrParams, q, L0_1, L0_2, dT3=0.0, dT4=0.0, T_lower=None):
    """Platform wrench ``A_m6 T`` (6,) from upper unstretched lengths and lower tensions.

    ``T_lower`` are the nominal lower-group tensions; by default they come from
    :func:`optimal_tensions` at ``q``.
    """
    geom = kin.cable_geometry(params, q)
    if T_lower is None:
        T_lower = optimal_tensions(params, q).T_opt[2:]
    T = member_tensions(params, q, L0_1, L0_2, T_lower[0] + dT3, T_lower[1] + dT4, geom)
    return geom.A_m6 @ T


def generalized_cable_forces(params: HcdrParams, q, member_T, geom=None):
    """Cable wrench mapped onto the 11 generalized coordinates.

    Forces act on ``p_m`` directly; the world-frame moment is mapped onto the
    Euler angles through the transpose of the angular-rate map. This is the
    negative gradient of the cable strain energy when tensions are elastic.
    """
    geom = geom or kin.cable_geometry(params, q)
    w = geom.A_m6 @ np.asarray(member_T, dtype=float)
    Q = np.zeros(kin.N_Q)
    Q[0:3] = w[0:3]
    Q[3:6] = kin.euler_rate_axes(q).T @ w[3:6]
    return Q
