"""Linear wave equation: the PIRK1 stability window in C1 on a 1D spherical grid.

The 2D (100 x 32) version of this scan is part of the acceptance suite; the
1D grid keeps this demo to a minute or two.
"""

from pirk.schemes import PIRK1Custom, SchemeId, pirk_tableau
from pirk.stability import bisect_boundary, fit_xbar, wave_x_max
from pirk.wave_bench import WaveConfig, make_grid, run_wave_experiment, xbar_estimate

GRID = dict(coords="spherical", dims=1, resolution=(100,), accuracy=4)


def stable(c1, cfl):
    return run_wave_experiment(WaveConfig(**GRID, scheme=PIRK1Custom(c1), cfl=cfl)).stable


xhat = xbar_estimate(make_grid("spherical", 1, (100,), 4))
print(f"x-bar from the discrete Laplacian: {xhat:.3f}")
print(f"linear theory: PIRK1 stable for x <= {wave_x_max(pirk_tableau(SchemeId.PIRK1)):.3f}")

points = []
for cfl in (0.4, 0.6, 0.8):
    lower = stable(1.0, cfl), stable(0.98, cfl)
    last, first = bisect_boundary(lambda c: stable(c, cfl), 1.0, 1.0, 0.02)
    points.append((cfl, 0.5 * (last + first)))
    print(f"cfl={cfl}: C1=1.00 stable={lower[0]}, C1=0.98 stable={lower[1]}, "
          f"upper limit between {last:.2f} and {first:.2f}")

print(f"x-bar fitted to the upper limits: {fit_xbar(points).xbar:.3f}")
