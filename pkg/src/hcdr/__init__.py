"""Redundancy resolution, dynamics and closed-loop simulation of an 11-DOF hybrid
cable-driven robot: a cable-suspended platform carrying a 3-joint arm and two
balancing pendulums."""
from .config import ConfigError, HcdrParams, ScenarioConfig, load_params, load_scenario
from .kinematics import JointState

__version__ = "0.1.0"

__all__ = ["ConfigError", "HcdrParams", "JointState", "ScenarioConfig", "load_params",
           "load_scenario", "__version__"]
