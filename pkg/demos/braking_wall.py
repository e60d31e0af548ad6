"""
Stopping in front of a wall
===========================

The smallest interesting reachability problem: a car at distance d from
a wall, driving toward it at speed v, braking as hard as it can. Physics
says the car stops in v^2 / (2 a_max) meters, so everything below that
parabola in the (d, v) plane is doomed no matter what the driver does.

Here we recover the same boundary numerically from the safety PDE and
print both side by side.
"""

import numpy as np

from hjsafe.dynamics import Braking2D
from hjsafe.grid import GridSpec, ScalarField
from hjsafe.solver import SolveConfig, solve_tube

# state space: gap to the wall 0..60 m, speed 0..20 m/s
grid = GridSpec((0.0, 0.0), (60.0, 20.0), (121, 81), (False, False),
                names=("gap_m", "v_mps"))
accel_max = 4.0

# the failure surface is simply "gap = 0", so the signed distance to
# failure is the gap itself
gap = grid.axis(0)[:, None]
ell = ScalarField(grid, np.broadcast_to(gap, grid.shape).ravel())

# march the tube backward until it stops moving
model = Braking2D(grid, accel_max)
vf = solve_tube(ell, model, SolveConfig(horizon=10.0, convergence_tol=1e-6,
                                        snapshot_stride=10 ** 6))
print(f"converged: {vf.converged} (horizon reached {-vf.times[0]:.2f} s)")

# walk up the speed axis and find where the value crosses zero
V = vf.fields[0].shaped
print(f"\n{'v [m/s]':>8} {'PDE d_crit [m]':>15} {'v^2/2a [m]':>12}")
for j in range(0, grid.shape[1], 8):
    col = V[:, j]
    flips = np.flatnonzero((col[:-1] < 0) & (col[1:] >= 0))
    if flips.size:
        i = flips[0]
        frac = col[i] / (col[i] - col[i + 1])
        d_num = grid.axis(0)[i] + frac * grid.spacing[0]
    else:
        d_num = 0.0
    v = grid.axis(1)[j]
    print(f"{v:8.1f} {d_num:15.2f} {v * v / (2 * accel_max):12.2f}")

print("\nBelow the parabola the value is negative: no control input "
      "avoids the wall.")
