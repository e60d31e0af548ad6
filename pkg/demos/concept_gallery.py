"""
One solver, six safety concepts
===============================

Every mainstream notion of "the unsafe set" for two cars is the same
backward reachability computation with different assumptions plugged
in: who controls what, how hard each agent can act, and whether the
other agent is adversarial, scripted, or inert.

This script runs the gallery on one shared coarse grid and reports how
much of a mid-speed plane each concept condemns. Expect the
forward-reachable-set variant to condemn the most (it credits the ego
with no evasion at all) and the adversarial game the least among the
pessimistic concepts; constant motion can dip below both, since a
non-reacting opponent is easier to survive than a hunting one.

Contingency answers a different question: can the ego still brake to a
crawl without touching the other car? Its numbers are not comparable
cell for cell, and the horizon must leave room for the whole stopping
maneuver or everything is flagged.
"""

import math

import numpy as np

from hjsafe.concepts import SafetyConceptSpec, Scenario, build, run_concept
from hjsafe.grid import GridSpec
from hjsafe.solver import SolveConfig

grid = GridSpec(
    (-24.0, -10.0, -math.pi, 0.0, 0.0),
    (24.0, 10.0, math.pi, 15.0, 15.0),
    (25, 11, 12, 7, 7),
    (False, False, True, False, False),
)
scenario = Scenario(grid=grid)
# 2 s leaves room to stop from 7.5 m/s at 4 m/s^2
config = SolveConfig(horizon=2.0, snapshot_stride=10 ** 6)

# slice indices for the head-on plane: opposing headings, mid speeds
i_th = 6            # dtheta = 0 on a periodic axis with 12 nodes
i_v = 3             # 7.5 m/s for both cars

print(f"{'concept':>16} {'unsafe % of plane':>18}")
for kind in ("worst_case", "frs", "sff", "constant_motion", "contingency"):
    # the default 0.5 m/s crawl threshold is finer than this demo's
    # speed axis (2.5 m/s per cell); pick one the grid can see
    extra = {"contingency_v_stop": 2.5} if kind == "contingency" else {}
    cb = build(SafetyConceptSpec(kind=kind, **extra), scenario, config)
    result = run_concept(cb)
    vf = result.values["main"]
    plane = vf.fields[0].shaped[:, :, i_th, i_v, i_v]
    # contingency flags unsafe where the value is nonnegative; every
    # other concept uses the usual below-zero convention
    unsafe = plane >= 0 if kind == "contingency" else plane < 0
    print(f"{kind:>16} {100 * unsafe.mean():18.1f}")

# rss is charted: two low-dimensional solves combined by intersection
cb = build(SafetyConceptSpec(kind="rss"), scenario, config)
result = run_concept(cb)
names = sorted(result.values)
print(f"\nrss charts: {names}")
for name in names:
    vf = result.values[name]
    print(f"  {name}: grid {vf.grid.shape}, horizon {-vf.times[0]:.1f} s, "
          f"converged {vf.converged}")
print("a state is rss-unsafe only when every chart marks it unsafe")
