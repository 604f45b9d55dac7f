"""Compiled PIRK time loop.

Operator kernels are jitted functions ``f(t, u, v, p, out)``; ``p`` is an
arbitrary tuple of parameters.  L2 kernels receive ``v`` only for a uniform
signature and must not read it.
"""

import numba as nb
import numpy as np


@nb.njit(cache=False)
def _axpy(y, c, x):
    for q in range(y.size):
        y[q] += c * x[q]


@nb.njit(cache=False)
def _all_finite(x):
    acc = 0.0
    for q in range(x.size):
        acc += x[q] * 0.0
    return acc == 0.0


@nb.njit(cache=False)
def pirk_evolve(l1, l2, l3, diag, p, A, At, cc, need2, u, v, t0, dt, n, rem,
                t_end, stride, keep, blow, out, times, counts):
    """Advance ``n`` steps of ``dt`` plus an optional remainder step.

    ``u`` and ``v`` are overwritten in place with the last valid state.
    Returns (status, steps, rows written, failure time); status 0 = done,
    1 = non-finite stage value, 2 = diagnostic above ``blow``.  Diagnostics
    run every ``stride`` steps; every ``keep``-th row (and the last) is kept.
    """
    s = A.shape[0] - 1
    nu = u.size
    nv = v.size
    k1 = np.zeros((s, nu))
    k3 = np.zeros((s, nv))
    k2 = np.zeros((s + 1, nv))
    ui = np.empty(nu)
    vi = np.empty(nv)

    diag(t0, u, v, p, out[0])
    times[0] = t0
    rows = 1
    if not abs(out[0, 0]) <= blow:
        return 2, 0, rows, t0

    total = n + (1 if rem > 0.0 else 0)
    have = False
    t = t0
    seen = 0
    for k in range(1, total + 1):
        h = dt if k <= n else rem
        if need2[0] and not have:
            l2(t, u, v, p, k2[0])
            counts[1] += 1
        l1(t, u, v, p, k1[0])
        l3(t, u, v, p, k3[0])
        counts[0] += 1
        counts[2] += 1
        for i in range(1, s + 1):
            ti = t + cc[i] * h
            ui[:] = u
            for j in range(i):
                if A[i, j] != 0.0:
                    _axpy(ui, h * A[i, j], k1[j])
            if need2[i]:
                l2(ti, ui, vi, p, k2[i])
                counts[1] += 1
            vi[:] = v
            for j in range(i + 1):
                if At[i, j] != 0.0:
                    _axpy(vi, h * At[i, j], k2[j])
            for j in range(i):
                if A[i, j] != 0.0:
                    _axpy(vi, h * A[i, j], k3[j])
            if not (_all_finite(ui) and _all_finite(vi)):
                return 1, k - 1, rows, ti
            if i < s:
                l1(ti, ui, vi, p, k1[i])
                l3(ti, ui, vi, p, k3[i])
                counts[0] += 1
                counts[2] += 1
        u[:] = ui
        v[:] = vi
        if need2[s]:
            k2[0, :] = k2[s, :]
            have = True
        else:
            have = False
        t = t0 + k * dt if k <= n else t_end
        if k % stride == 0 or k == total:
            diag(t, u, v, p, out[rows])
            times[rows] = t
            seen += 1
            bad = not abs(out[rows, 0]) <= blow
            if seen % keep == 0 or k == total or bad:
                rows += 1
            if bad:
                return 2, k, rows, t
    return 0, total, rows, 0.0
