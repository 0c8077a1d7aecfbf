"""Physical constants, limits and scenario definitions.

Both parameter sets and scenarios live in YAML files. The bundled defaults are
in ``hcdr/data``; :func:`default_params_path` and :func:`scenario_path` locate
them.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

N_CABLES = 12
# actuator order: L01, L02, T3, T4 (1-based cable numbers)
DEFAULT_CABLE_GROUPS = ((5, 6, 11, 12), (1, 2, 7, 8), (4, 10), (3, 9))


class ConfigError(ValueError):
    """Raised when a parameter or scenario file is malformed or invalid."""


@dataclass(frozen=True)
class HcdrParams:
    frame_length: float
    frame_height: float
    platform_length: float
    platform_width: float
    platform_height: float
    arm_base_offset: np.ndarray  # (3,)
    platform_mass: float
    platform_inertia: np.ndarray  # (3,) principal moments
    pendulum_mass: np.ndarray  # (2,)
    pendulum_inertia: np.ndarray  # (2,) about pendulum body x
    pendulum_joint_offset: np.ndarray  # (2, 3)
    pendulum_com_offset: np.ndarray  # (2, 3)
    link_mass: np.ndarray  # (3,)
    link_inertia: np.ndarray  # (3, 3) one row of principal moments per link
    link_joint_offset: np.ndarray  # (3, 3)
    link_com_offset: np.ndarray  # (3, 3)
    t34_max: float
    ea: np.ndarray  # (2,) EA_1, EA_2 of the upper groups
    ea_lower: float
    g: float
    frame_anchors: np.ndarray  # (12, 3) a_i
    platform_anchors: np.ndarray  # (12, 3) r_i
    cable_groups: tuple = DEFAULT_CABLE_GROUPS

    @property
    def total_mass(self) -> float:
        return float(self.platform_mass + self.pendulum_mass.sum() + self.link_mass.sum())

    @property
    def total_weight(self) -> float:
        return self.total_mass * self.g

    @property
    def cable_ea(self) -> np.ndarray:
        """Per-cable EA (12,), upper groups from ``ea``, lower cables from ``ea_lower``."""
        out = np.full(N_CABLES, float(self.ea_lower))
        for k in (0, 1):
            out[np.asarray(self.cable_groups[k]) - 1] = self.ea[k]
        return out

    def group_index(self, k: int) -> np.ndarray:
        return np.asarray(self.cable_groups[k]) - 1

    def replace(self, **changes) -> "HcdrParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Limits:
    qd_max: np.ndarray  # (5,) actuated velocity bounds
    qd_min: np.ndarray
    dqd_max: np.ndarray  # (5,) per-step velocity change bounds
    dqd_min: np.ndarray
    q_max: np.ndarray | None = None  # (11,) optional position bounds
    q_min: np.ndarray | None = None
    eps_a: float = 2.22e-16


@dataclass(frozen=True)
class PulseChannel:
    index: int  # 1-based generalized-coordinate index
    amplitude: float
    t_on: float
    t_off: float


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    waypoints: np.ndarray  # (n, 3) positions
    waypoint_velocities: np.ndarray  # (n, 3)
    waypoint_times: np.ndarray  # (n,)
    t_start: float
    t_end: float
    sample_time: float
    method: str  # "toaj" | "toauj"
    k_dp_a: np.ndarray  # (5,) diagonal
    k_dp_u: np.ndarray  # (3,) diagonal
    disturbance: tuple[PulseChannel, ...]
    kp: np.ndarray  # (7,) diagonal
    kd: np.ndarray
    ki: np.ndarray
    control_on: bool
    limits: Limits
    initial_q: np.ndarray  # (11,)
    feedback_gain: float = 10.0
    anti_windup: float = 1e3
    disturb_plant: bool = False

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.sample_time))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# anchor reconstruction


def reconstruct_anchors(frame_length, frame_height, platform_length, platform_width,
                        platform_height):
    """Cable anchor points from the frame and platform dimensions.

    Cables 1-6 lie on the front face (z = +w/2) and 7-12 mirror them on the
    back face. Each upper group is a parallelogram pair running from the top
    frame corner (and a point ``platform_height`` below it) to the top and
    bottom corners of the platform side; each lower cable runs from a bottom
    frame corner to a bottom platform corner.

    Returns
    -------
    a, r : ndarray, shape (12, 3)
        Frame anchors in the inertial frame and platform anchors in the
        platform frame.
    """
    fx, fy = frame_length / 2, frame_height / 2
    bx, by, bz = platform_length / 2, platform_height / 2, platform_width / 2
    front_a = [
        (fx, fy), (fx, fy - platform_height),      # 1, 2: upper right
        (fx, -fy),                                  # 3: lower right
        (-fx, -fy),                                 # 4: lower left
        (-fx, fy), (-fx, fy - platform_height),    # 5, 6: upper left
    ]
    front_r = [(bx, by), (bx, -by), (bx, -by), (-bx, -by), (-bx, by), (-bx, -by)]
    a = np.zeros((N_CABLES, 3))
    r = np.zeros((N_CABLES, 3))
    for i in range(6):
        for face, z in ((0, bz), (6, -bz)):
            a[i + face] = (*front_a[i], z)
            r[i + face] = (*front_r[i], z)
    return a, r


# ---------------------------------------------------------------------------
# loading / saving


def _vec(data, key, n=None, shape=None):
    try:
        arr = np.asarray(data[key], dtype=float)
    except KeyError:
        raise ConfigError(f"missing field '{key}'") from None
    except (TypeError, ValueError):
        raise ConfigError(f"field '{key}' is not numeric") from None
    if n is not None and arr.shape != (n,):
        raise ConfigError(f"field '{key}' must have {n} entries, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise ConfigError(f"field '{key}' must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"field '{key}' is not finite")
    return arr


def _num(data, key, default=None):
    if key not in data:
        if default is None:
            raise ConfigError(f"missing field '{key}'")
        return float(default)
    try:
        val = float(data[key])
    except (TypeError, ValueError):
        raise ConfigError(f"field '{key}' is not numeric") from None
    if not np.isfinite(val):
        raise ConfigError(f"field '{key}' is not finite")
    return val


def _section(data, key):
    sec = data.get(key) if isinstance(data, dict) else None
    if not isinstance(sec, dict):
        raise ConfigError(f"missing section '{key}'")
    return sec


def _read_yaml(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _positive(name, value):
    if np.any(np.asarray(value) <= 0):
        raise ConfigError(f"{name} nonpositive")


def validate_params(p: HcdrParams) -> HcdrParams:
    for name in ("frame_length", "frame_height", "platform_length", "platform_width",
                 "platform_height", "platform_mass", "platform_inertia", "pendulum_mass",
                 "pendulum_inertia", "link_mass", "link_inertia", "t34_max", "ea",
                 "ea_lower", "g"):
        _positive(name, getattr(p, name))
    members = sorted(i for grp in p.cable_groups for i in grp)
    if members != list(range(1, N_CABLES + 1)):
        raise ConfigError("cable_groups must partition cables 1..12")
    if len(p.cable_groups) != 4:
        raise ConfigError("cable_groups must list exactly four groups")
    return p


def params_from_dict(data: dict) -> HcdrParams:
    frame = _section(data, "frame")
    plat = _section(data, "platform")
    pend = _section(data, "pendulums")
    arm = _section(data, "arm")
    cab = _section(data, "cables")
    groups = cab.get("groups", [list(g) for g in DEFAULT_CABLE_GROUPS])
    try:
        groups = tuple(tuple(int(i) for i in grp) for grp in groups)
    except (TypeError, ValueError):
        raise ConfigError("field 'groups' must be lists of cable numbers") from None
    p = HcdrParams(
        frame_length=_num(frame, "length"),
        frame_height=_num(frame, "height"),
        platform_length=_num(plat, "length"),
        platform_width=_num(plat, "width"),
        platform_height=_num(plat, "height"),
        arm_base_offset=_vec(arm, "base_offset", 3),
        platform_mass=_num(plat, "mass"),
        platform_inertia=_vec(plat, "inertia", 3),
        pendulum_mass=_vec(pend, "mass", 2),
        pendulum_inertia=_vec(pend, "inertia", 2),
        pendulum_joint_offset=_vec(pend, "joint_offset", shape=(2, 3)),
        pendulum_com_offset=_vec(pend, "com_offset", shape=(2, 3)),
        link_mass=_vec(arm, "mass", 3),
        link_inertia=_vec(arm, "inertia", shape=(3, 3)),
        link_joint_offset=_vec(arm, "joint_offset", shape=(3, 3)),
        link_com_offset=_vec(arm, "com_offset", shape=(3, 3)),
        t34_max=_num(cab, "t34_max"),
        ea=_vec(cab, "ea", 2),
        ea_lower=_num(cab, "ea_lower", default=_vec(cab, "ea", 2)[0]),
        g=_num(data, "g"),
        frame_anchors=_vec(cab, "frame_anchors", shape=(N_CABLES, 3)),
        platform_anchors=_vec(cab, "platform_anchors", shape=(N_CABLES, 3)),
        cable_groups=groups,
    )
    return validate_params(p)


def params_to_dict(p: HcdrParams) -> dict:
    f = lambda a: np.asarray(a, dtype=float).tolist()  # noqa: E731
    return {
        "g": float(p.g),
        "frame": {"length": float(p.frame_length), "height": float(p.frame_height)},
        "platform": {
            "length": float(p.platform_length),
            "width": float(p.platform_width),
            "height": float(p.platform_height),
            "mass": float(p.platform_mass),
            "inertia": f(p.platform_inertia),
        },
        "pendulums": {
            "mass": f(p.pendulum_mass),
            "inertia": f(p.pendulum_inertia),
            "joint_offset": f(p.pendulum_joint_offset),
            "com_offset": f(p.pendulum_com_offset),
        },
        "arm": {
            "base_offset": f(p.arm_base_offset),
            "mass": f(p.link_mass),
            "inertia": f(p.link_inertia),
            "joint_offset": f(p.link_joint_offset),
            "com_offset": f(p.link_com_offset),
        },
        "cables": {
            "t34_max": float(p.t34_max),
            "ea": f(p.ea),
            "ea_lower": float(p.ea_lower),
            "groups": [list(g) for g in p.cable_groups],
            "frame_anchors": f(p.frame_anchors),
            "platform_anchors": f(p.platform_anchors),
        },
    }


def load_params(path=None) -> HcdrParams:
    """Load and validate a parameter file (the bundled default when ``path`` is None)."""
    return params_from_dict(_read_yaml(path or default_params_path()))


def dump_params(p: HcdrParams, path) -> None:
    Path(path).write_text(yaml.safe_dump(params_to_dict(p), sort_keys=False))


def _limits_from_dict(d: dict) -> Limits:
    q_max = _vec(d, "q_max", 11) if "q_max" in d else None
    q_min = _vec(d, "q_min", 11) if "q_min" in d else None
    lim = Limits(
        qd_max=_vec(d, "qd_max", 5),
        qd_min=_vec(d, "qd_min", 5),
        dqd_max=_vec(d, "dqd_max", 5),
        dqd_min=_vec(d, "dqd_min", 5),
        q_max=q_max,
        q_min=q_min,
        eps_a=_num(d, "eps_a", default=2.22e-16),
    )
    for lo, hi in (("qd_min", "qd_max"), ("dqd_min", "dqd_max"), ("q_min", "q_max")):
        a, b = getattr(lim, lo), getattr(lim, hi)
        if a is not None and b is not None and np.any(b < a):
            raise ConfigError(f"{hi} below {lo}")
    if lim.eps_a <= 0:
        raise ConfigError("eps_a nonpositive")
    return lim


def scenario_from_dict(data: dict) -> ScenarioConfig:
    time = _section(data, "time")
    t_start, t_end, ts = _num(time, "start"), _num(time, "end"), _num(time, "sample_time")
    if ts <= 0:
        raise ConfigError("sample_time nonpositive")
    if t_end <= t_start:
        raise ConfigError("t_end must exceed t_start")

    wps = data.get("waypoints")
    if not isinstance(wps, list) or len(wps) < 2:
        raise ConfigError("at least two waypoints are required")
    pos = np.array([_vec(w, "position", 3) for w in wps])
    vel = np.array([_vec(w, "velocity", 3) if "velocity" in w else np.zeros(3) for w in wps])
    if all("time" in w for w in wps):
        times = np.array([_num(w, "time") for w in wps])
    elif any("time" in w for w in wps):
        raise ConfigError("waypoint times must be given for all waypoints or none")
    else:
        times = np.linspace(t_start, t_end, len(wps))
    if np.any(np.diff(times) <= 0) or times[0] != t_start or times[-1] != t_end:
        raise ConfigError("waypoint times must increase from t_start to t_end")

    planner = _section(data, "planner")
    method = str(planner.get("method", "toauj")).lower()
    if method not in ("toaj", "toauj"):
        raise ConfigError(f"unknown method '{method}'")
    k_dp_a = _vec(planner, "k_dp_a", 5)
    k_dp_u = _vec(planner, "k_dp_u", 3)
    if np.any(k_dp_a < 0) or np.any(k_dp_u < 0):
        raise ConfigError("damping gains must be nonnegative")
    if method == "toaj":
        k_dp_u = np.zeros(3)

    pulses = []
    for ch in data.get("disturbance", []) or []:
        pc = PulseChannel(int(_num(ch, "index")), _num(ch, "amplitude"),
                          _num(ch, "t_on"), _num(ch, "t_off"))
        if not 1 <= pc.index <= 11:
            raise ConfigError(f"disturbance index {pc.index} outside 1..11")
        if pc.t_off <= pc.t_on:
            raise ConfigError("disturbance t_off must exceed t_on")
        if pc.t_on < t_start or pc.t_off > t_end:
            raise ConfigError("disturbance window outside [t_start, t_end]")
        pulses.append(pc)

    ctrl = _section(data, "controller")
    kp, kd, ki = _vec(ctrl, "kp", 7), _vec(ctrl, "kd", 7), _vec(ctrl, "ki", 7)
    if np.any(kp < 0) or np.any(kd < 0) or np.any(ki < 0):
        raise ConfigError("controller gains must be nonnegative")

    return ScenarioConfig(
        name=str(data.get("name", "scenario")),
        waypoints=pos,
        waypoint_velocities=vel,
        waypoint_times=times,
        t_start=t_start,
        t_end=t_end,
        sample_time=ts,
        method=method,
        k_dp_a=k_dp_a,
        k_dp_u=k_dp_u,
        disturbance=tuple(pulses),
        kp=kp,
        kd=kd,
        ki=ki,
        control_on=bool(ctrl.get("on", True)),
        limits=_limits_from_dict(_section(data, "limits")),
        initial_q=_vec(data, "initial_q", 11) if "initial_q" in data else np.zeros(11),
        feedback_gain=_num(planner, "feedback_gain", default=10.0),
        anti_windup=_num(ctrl, "anti_windup", default=1e3),
        disturb_plant=bool(data.get("disturb_plant", False)),
    )


def scenario_to_dict(s: ScenarioConfig) -> dict:
    f = lambda a: np.asarray(a, dtype=float).tolist()  # noqa: E731
    lim = s.limits
    limits = {"qd_max": f(lim.qd_max), "qd_min": f(lim.qd_min),
              "dqd_max": f(lim.dqd_max), "dqd_min": f(lim.dqd_min), "eps_a": float(lim.eps_a)}
    if lim.q_max is not None:
        limits["q_max"] = f(lim.q_max)
    if lim.q_min is not None:
        limits["q_min"] = f(lim.q_min)
    return {
        "name": s.name,
        "time": {"start": float(s.t_start), "end": float(s.t_end),
                 "sample_time": float(s.sample_time)},
        "waypoints": [
            {"position": f(p), "velocity": f(v), "time": float(t)}
            for p, v, t in zip(s.waypoints, s.waypoint_velocities, s.waypoint_times)
        ],
        "initial_q": f(s.initial_q),
        "planner": {"method": s.method, "k_dp_a": f(s.k_dp_a), "k_dp_u": f(s.k_dp_u),
                    "feedback_gain": float(s.feedback_gain)},
        "limits": limits,
        "disturbance": [
            {"index": c.index, "amplitude": float(c.amplitude), "t_on": float(c.t_on),
             "t_off": float(c.t_off)}
            for c in s.disturbance
        ],
        "disturb_plant": bool(s.disturb_plant),
        "controller": {"on": bool(s.control_on), "kp": f(s.kp), "kd": f(s.kd), "ki": f(s.ki),
                       "anti_windup": float(s.anti_windup)},
    }


def load_scenario(path) -> ScenarioConfig:
    """Load and validate a scenario file. ``path`` may also be a bundled name."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        try:
            p = scenario_path(str(path))
        except FileNotFoundError:
            pass
    return scenario_from_dict(_read_yaml(p))


def dump_scenario(s: ScenarioConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(s), sort_keys=False))


def _data_file(name) -> Path:
    path = Path(str(resources.files("hcdr") / "data" / name))
    if not path.exists():
        raise FileNotFoundError(name)
    return path


def default_params_path() -> Path:
    return _data_file("params_default.yaml")


def scenario_path(name: str) -> Path:
    return _data_file(f"{name}.yaml")
