#!/usr/bin/env python3
"""Head-to-head: MPC vs on/off vs tabulated risk-averse DP.

Runs the full comparison grid (three catalog starts x controllers) on
the synthetic 12 h wet preset at the coarse 60 s step and prints the
cumulative soil-moisture deviation and control effort of every cell.
"""

from stormdp import PlantParams, compare, standard_initial_states, wet_12h
from stormdp.sim import ControllerSpec

p = PlantParams(tau=60.0)
weather = wet_12h(dt=p.tau)
controllers = (
    [ControllerSpec(kind="mpc", lam=1e-3, horizon=10)]
    + [ControllerSpec(kind="onoff", v=v) for v in (0.2, 0.5, 1.0, 1.5, 2.0)]
    + [ControllerSpec(kind="dp", theta=-0.1)]
)

rows = compare(standard_initial_states(p), controllers, weather, N=720, p=p)

print(f"{'scenario':10s} {'controller':22s} {'cum. dev (m^3*steps)':>20s} "
      f"{'sum u^2':>9s}  status")
last = None
for r in rows:
    if r.scenario != last:
        print("-" * 70)
        last = r.scenario
    print(f"{r.scenario:10s} {r.params:22s} {r.cumulative_deviation:20.3f} "
          f"{r.sum_u_sq:9.3f}  {r.status}")

print("\nreading the table:")
print("- on the low-low and high-low starts the MPC tracks the moisture")
print("  target with a fraction of the deviation of every on/off setting;")
print("- on high-high the bed starts above target, the pump stays gated")
print("  off for every controller, and all rows coincide.")
