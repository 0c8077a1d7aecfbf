"""Map the optimal cable tensions over the platform workspace.

For every in-plane platform position the four cable groups must hold up the
robot's weight with no net horizontal force or moment. One lower group is
pinned at its tension limit and the other three follow from the static
balance. This prints which lower group is pinned, and where no admissible
tension set exists. On the vertical centre line both lower groups reach the
limit together, so either label is correct there.

Run from the repository root::

    python demos/tension_map.py
"""
import numpy as np

from hcdr import load_params
from hcdr.cable_tension import InfeasibleTensionError, optimal_tensions

params = load_params()
xs = np.round(np.linspace(-0.6, 0.6, 13), 3)
ys = np.round(np.linspace(0.4, -0.4, 9), 3)

print("pinned lower group (3 or 4), '.' where infeasible")
print("   y \\ x " + "".join(f"{x:6.2f}" for x in xs))
upper = {}
for y in ys:
    line = []
    for x in xs:
        q = np.zeros(11)
        q[:2] = x, y
        try:
            sol = optimal_tensions(params, q)
        except InfeasibleTensionError:
            line.append("     .")
            continue
        line.append(f"{sol.saturated + 1:6d}")
        upper[(x, y)] = sol.T_opt[:2]
    print(f"{y:8.2f} " + "".join(line))

T = np.array(list(upper.values()))
print(f"\nfeasible poses: {len(upper)} of {xs.size * ys.size}")
print(f"upper-group tensions span {T.min():.1f} .. {T.max():.1f} N "
      f"(weight {params.total_mass * params.g:.2f} N, lower limit {params.t34_max:.0f} N)")
