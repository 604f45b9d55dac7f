"""Linear oscillator: where PIRK1 stays bounded and the explicit schemes drift.

Run with ``python3 demos/ode_oscillator.py``.
"""

import math

from pirk.ode_bench import ode_convergence, run_ode_experiment
from pirk.schemes import SchemeId

# Undamped oscillator u' = -v, v' = u (sigma = 0, phi = pi/2), started at (0, 1).
print("PIRK1 stays bounded up to dt = 2:")
for dt in (0.5, 1.0, 1.9, 2.1):
    rep = run_ode_experiment(SchemeId.PIRK1, 0.0, math.pi / 2, dt, 1000.0)
    print(f"  dt={dt:<4} L2(100)={rep.extras['l2_at_verdict']:.3g} "
          f"max|u|={rep.extras['max_abs_u']:.3g} stable={rep.stable}")

# The bound on |u| follows from the conserved quadratic u^2 + v^2 - dt*u*v.
print("  predicted max|u| at dt=1.9:", round(1 / math.sqrt(1 - 1.9 ** 2 / 4), 3))

print("\nForward Euler grows at every step size:")
for dt in (1e-2, 1e-1):
    rep = run_ode_experiment(SchemeId.ERK1, 0.0, math.pi / 2, dt, 1000.0)
    print(f"  dt={dt:<5} max|u|={rep.extras['max_abs_u']:.3g}")

print("\nMeasured orders (RMS error over t < 100):")
for scheme in (SchemeId.PIRK1, SchemeId.PIRK2a, SchemeId.PIRK3b, SchemeId.PIRK4,
               SchemeId.ERK3):
    res = ode_convergence(scheme, [1e-3, 2e-3, 5e-3, 1e-2])
    print(f"  {scheme.value:<7} {res['slope_rms']:.2f}")
