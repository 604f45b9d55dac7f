"""Fourth-order stability interval: check |det M| <= 1 and repair the coefficients.

Run with ``python3 demos/pirk4_interval.py`` (about half a minute).
"""

from pirk.schemes import ERK4_C, PIRK4_COEFFS, explicit_padding
from pirk.stability import optimize_pirk4_coefficients, verify_pirk4_interval

erk4 = explicit_padding(4)
for lo in (-6.75, -7.0):
    res = verify_pirk4_interval(ERK4_C, (lo, 0.0), tableau=erk4)
    print(f"ERK4 on [{lo}, 0]: passed={res.passed} max|det|={res.max_abs_det:.4f}")

res = verify_pirk4_interval(PIRK4_COEFFS, (-27.0, 0.0))
print(f"\nPIRK4 (reference C) on [-27, 0]: passed={res.passed}")
if not res.passed:
    w, s = res.first_violation
    print(f"  first violation at s={s:.3f}, pattern {w}, max|det|={res.max_abs_det:.3f}")

# Grow the interval step by step, re-optimizing C from the previous optimum.
opt = optimize_pirk4_coefficients([5, 10, 15, 20, 23, 25, 26, 27], seed=PIRK4_COEFFS)
print("\noptimized C:", tuple(round(c, 5) for c in opt.coefficients))
res = verify_pirk4_interval(opt.coefficients, (-27.0, 0.0))
print(f"  on [-27, 0]: passed={res.passed} max|det|={res.max_abs_det:.12f}")
