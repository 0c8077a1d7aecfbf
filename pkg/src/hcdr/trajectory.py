"""Quintic point-to-point Cartesian reference with proportional feedback shaping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_FEEDBACK_GAIN = 10.0


@dataclass(frozen=True)
class Segment:
    p_prev: np.ndarray
    p_next: np.ndarray
    t_prev: float
    t_next: float
    sample_time: float

    @property
    def n_steps(self) -> int:
        return int(round((self.t_next - self.t_prev) / self.sample_time))

    @property
    def duration(self) -> float:
        return self.t_next - self.t_prev


@dataclass
class TrajectorySample:
    rho: np.ndarray
    rho_d: np.ndarray
    rho_dd: np.ndarray
    pd_cmd: np.ndarray  # commanded end-effector velocity
    pdd_cmd: np.ndarray  # commanded end-effector acceleration
    eta: float


def quintic(eta):
    """Normalized position profile and its first two eta-derivatives."""
    e = np.asarray(eta, dtype=float)
    s = 6 * e**5 - 15 * e**4 + 10 * e**3
    ds = 30 * e**4 - 60 * e**3 + 30 * e**2
    dds = 120 * e**3 - 180 * e**2 + 60 * e
    return s, ds, dds


def reference(segment: Segment, eta):
    """(rho, rho_d, rho_dd) at normalized time ``eta`` in [0, 1]."""
    delta = np.asarray(segment.p_next, dtype=float) - np.asarray(segment.p_prev, dtype=float)
    s, ds, dds = quintic(eta)
    T = segment.duration
    return (segment.p_prev + delta * s, delta * ds / T, delta * dds / T**2)


def sample(k: int, segment: Segment, p_e_meas, pd_e_meas, gain=DEFAULT_FEEDBACK_GAIN):
    """Reference and feedback-shaped commands at step ``k`` (1-based).

    ``eta = k / N`` is clamped to 1 on the final sample ``k = N + 1``. The
    commanded velocity is ``rho_d + K (rho - p_e)`` and the commanded
    acceleration ``rho_dd + K (rho_d - pd_e)``.
    """
    N = segment.n_steps
    if not 1 <= k <= N + 1:
        raise ValueError(f"step {k} outside [1, {N + 1}]")
    eta = min(k / N, 1.0)
    rho, rho_d, rho_dd = reference(segment, eta)
    pd = rho_d + gain * (rho - np.asarray(p_e_meas, dtype=float))
    pdd = rho_dd + gain * (rho_d - np.asarray(pd_e_meas, dtype=float))
    return TrajectorySample(rho, rho_d, rho_dd, pd, pdd, eta)


def peak_speed(segment: Segment) -> float:
    """Maximum of ``|rho_d|``, reached at ``eta = 0.5``."""
    return 1.875 * float(np.linalg.norm(np.subtract(segment.p_next, segment.p_prev))) / segment.duration


def segment_schedule(waypoints, times, sample_time):
    """Split a waypoint list into consecutive segments."""
    waypoints = np.atleast_2d(np.asarray(waypoints, dtype=float))
    times = np.asarray(times, dtype=float)
    if len(waypoints) != len(times):
        raise ValueError(f"{len(waypoints)} waypoints but {len(times)} times")
    if len(waypoints) < 2:
        raise ValueError("at least two waypoints are required")
    if np.any(np.diff(times) <= 0):
        raise ValueError("waypoint times must increase")
    return [Segment(waypoints[i], waypoints[i + 1], float(times[i]), float(times[i + 1]), sample_time)
            for i in range(len(waypoints) - 1)]
