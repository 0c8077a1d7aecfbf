"""Joint-space PID tracking law with a cable-tension input map.

The seven error channels are ``[p_mx, p_my, theta_p1, theta_p2, theta_a1,
theta_a2, theta_a3]``. The PID output on the two platform channels is mapped to
lower-cable tension increments through the inverse of the lower-group block
of the reduced structure matrix; the pendulum and arm channels pass through
as torques.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_CHANNELS = 7
# channel -> generalized coordinate (0-based)
CHANNEL_INDEX = np.array([0, 1, 6, 7, 8, 9, 10])


@dataclass(frozen=True)
class ControlGains:
    kp: np.ndarray
    kd: np.ndarray
    ki: np.ndarray

    def __post_init__(self):
        for name in ("kp", "kd", "ki"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim == 2:
                if np.any(v != np.diag(np.diag(v))):
                    raise ValueError(f"{name} must be diagonal")
                v = np.diag(v)
            if v.shape != (N_CHANNELS,):
                raise ValueError(f"{name} needs {N_CHANNELS} entries")
            if np.any(v < 0):
                raise ValueError(f"{name} has negative entries")
            object.__setattr__(self, name, v)

    @classmethod
    def zeros(cls):
        z = np.zeros(N_CHANNELS)
        return cls(z, z, z)

    @classmethod
    def from_scenario(cls, scenario):
        if not scenario.control_on:
            return cls.zeros()
        return cls(scenario.kp, scenario.kd, scenario.ki)


@dataclass
class ControlState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(N_CHANNELS))
    prev_error: np.ndarray | None = None
    bound: np.ndarray = field(default_factory=lambda: np.full(N_CHANNELS, 1e3))


class SingularInputMapError(np.linalg.LinAlgError):
    pass


def input_map(A_m3):
    """Block-diagonal map from PID output to ``[dT3, dT4, tau_p1, tau_p2, tau_a1..3]``."""
    B = np.asarray(A_m3, dtype=float)[:2, 2:4]
    cond = np.linalg.cond(B)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularInputMapError(f"lower-cable block singular (cond {cond:.3e})")
    out = np.eye(N_CHANNELS)
    out[:2, :2] = np.linalg.inv(B)
    return out


def control_step(reference, measured, measured_rates, reference_rates, A_m3, Ts,
                 gains: ControlGains, state: ControlState):
    """One PID update; returns ``(u, new_state)``.

    The integral uses the trapezoidal rule and is clipped to ``state.bound``.
    The error rate is ``reference_rates - measured_rates`` when reference
    rates are supplied, otherwise a backward difference of the error.
    """
    e = np.asarray(reference, dtype=float) - np.asarray(measured, dtype=float)
    prev = e if state.prev_error is None else state.prev_error
    if reference_rates is not None:
        e_dot = np.asarray(reference_rates, dtype=float) - np.asarray(measured_rates, dtype=float)
    else:
        e_dot = (e - prev) / Ts
    integral = np.clip(state.integral + 0.5 * Ts * (e + prev), -state.bound, state.bound)
    v = gains.kp * e + gains.kd * e_dot + gains.ki * integral
    u = input_map(A_m3) @ v
    return u, ControlState(integral, e, state.bound)
