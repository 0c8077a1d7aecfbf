"""Track the planned motion on the full plant with and without joint-space PID.

The plan from the coupled resolution gives upper-cable unstretched lengths,
lower-cable tensions and joint angles. The plant integrates the rigid-body
model under those cable set points. Without feedback the platform sags and
swings away from the path. The controller adds lower-cable tension increments
and joint torques that pull it back.

An optional third run adds inverse-dynamics feedforward on the pendulum and
arm joints (``--feedforward``).

Run from the repository root::

    python demos/closed_loop_tracking.py [--feedforward]

Expect about a minute for the plan and half a minute per simulated run.
"""
import argparse

import numpy as np

from hcdr import load_params, load_scenario
from hcdr.control import ControlGains
from hcdr.redundancy import plan
from hcdr.sim import plan_feedforward, simulate

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--feedforward", action="store_true")
args = parser.parse_args()

params = load_params()
scenario = load_scenario("scenario2")
print("planning ...", flush=True)
reference = plan(scenario, params)

runs = {
    "control off": dict(gains=ControlGains.zeros()),
    "control on": dict(gains=ControlGains(scenario.kp, scenario.kd, scenario.ki)),
}
if args.feedforward:
    runs["on + feedforward"] = dict(gains=ControlGains(scenario.kp, scenario.kd, scenario.ki),
                                    feedforward=plan_feedforward(params, reference))

traces = {}
for name, kw in runs.items():
    print(f"simulating, {name} ...", flush=True)
    traces[name] = simulate(scenario, params, reference, **kw)

print(f"\n{'':18s}{'max |error| x':>14s}{'y':>10s}{'z':>10s}   (m)")
for name, tr in traces.items():
    ex, ey, ez = tr.max_error
    print(f"{name:18s}{ex:14.4f}{ey:10.4f}{ez:10.4f}")

# Where does the remaining closed-loop error come from? Compare joint errors.
tr = traces["control on"]
joint_err = np.abs(tr.q[:, 8:11] - reference.q[:, 8:11]).max(axis=0)
print("\nwith control on, max arm joint error (rad):", np.array2string(joint_err, precision=4))
print("lower-cable tension range (N):",
      f"{tr.tensions[:, 2:].min():.1f} .. {tr.tensions[:, 2:].max():.1f}")
