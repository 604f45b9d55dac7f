"""Stepping engine for separable wave-like systems.

Two back ends share one contract.  The reference path evaluates the
operators as Python callables; the compiled path runs the whole time loop
in numba when the system carries jitted kernels (see :class:`Kernels`).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import _kernels
from .schemes import ImexSsp2Scheme, PirkTableau, resolve

__all__ = [
    "Kernels",
    "SeparableWaveSystem",
    "SystemState",
    "EvolutionRecord",
    "NumericalFailure",
    "pirk_step",
    "imex_ssp2_step",
    "evolve",
    "linear_system",
    "linear_update_matrix_numeric",
]


class NumericalFailure(RuntimeError):
    """Non-finite value produced while stepping."""

    def __init__(self, message: str, t: float, stage: int | None = None):
        super().__init__(message)
        self.t = t
        self.stage = stage


@dataclass(frozen=True)
class Kernels:
    """Jitted operator kernels ``f(t, u, v, p, out)`` writing into ``out``.

    ``diag(t, u, v, p, row)`` fills a row of ``ndiag`` diagnostics; the
    compiled loop aborts when ``|row[0]|`` exceeds the blow-up threshold.
    """

    l1: Any
    l2: Any
    l3: Any
    params: tuple
    diag: Any = None
    ndiag: int = 0


@dataclass
class SeparableWaveSystem:
    dim_u: int
    dim_v: int
    L1: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    L2: Callable[[float, np.ndarray], np.ndarray]
    L3: Callable[[float, np.ndarray, np.ndarray], np.ndarray] | None = None
    kernels: Kernels | None = None
    diagnostic: Callable[[float, np.ndarray, np.ndarray], np.ndarray] | None = None

    @classmethod
    def from_kernels(cls, dim_u: int, dim_v: int, kernels: Kernels):
        p = kernels.params

        def L1(t, u, v):
            out = np.empty(dim_u)
            kernels.l1(t, u, v, p, out)
            return out

        def L2(t, u):
            out = np.empty(dim_v)
            kernels.l2(t, u, u, p, out)
            return out

        def L3(t, u, v):
            out = np.empty(dim_v)
            kernels.l3(t, u, v, p, out)
            return out

        diagnostic = None
        if kernels.diag is not None:
            def diagnostic(t, u, v):
                row = np.empty(kernels.ndiag)
                kernels.diag(t, u, v, p, row)
                return row

        return cls(dim_u, dim_v, L1, L2, L3, kernels, diagnostic)


@dataclass(frozen=True)
class SystemState:
    t: float
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


@dataclass
class EvolutionRecord:
    times: np.ndarray
    samples: np.ndarray
    final: SystemState
    counts: dict[str, int]
    steps: int
    wall_time: float
    failed: bool = False
    failure_time: float | None = None
    failure_reason: str = ""
    extras: dict = field(default_factory=dict)

    def cost(self) -> dict[str, float]:
        """Operator evaluations per unit simulated time."""
        span = self.final.t - self.times[0] if len(self.times) else 0.0
        if span <= 0:
            return {k: 0.0 for k in self.counts}
        return {k: n / span for k, n in self.counts.items()}


class _Counter:
    def __init__(self, system: SeparableWaveSystem):
        self.sys = system
        self.counts = {"L1": 0, "L2": 0, "L3": 0}

    def L1(self, t, u, v):
        self.counts["L1"] += 1
        return self.sys.L1(t, u, v)

    def L2(self, t, u):
        self.counts["L2"] += 1
        return self.sys.L2(t, u)

    def L3(self, t, u, v):
        self.counts["L3"] += 1
        if self.sys.L3 is None:
            return np.zeros(np.shape(v))
        return self.sys.L3(t, u, v)


def _finite(x) -> bool:
    return bool(np.all(np.isfinite(x)))


def _l2_columns(tab: PirkTableau) -> np.ndarray:
    """Stages whose L2 value enters some later combination."""
    return np.any(np.tril(tab.a_tilde) != 0.0, axis=0)


def _pirk_core(ops, tab: PirkTableau, t: float, u, v, dt: float, l2_first=None):
    s = tab.stages
    A = tab.explicit_extended()
    At = tab.a_tilde
    cc = tab.abscissae
    need2 = _l2_columns(tab)
    k1, k3 = [], []
    k2 = [None] * (s + 1)
    ui, vi = u, v
    for i in range(s + 1):
        ti = t + cc[i] * dt if i else t
        if i:
            ui = u.copy()
            for j in range(i):
                if A[i, j] != 0.0:
                    ui = ui + (dt * A[i, j]) * k1[j]
            if not _finite(ui):
                raise NumericalFailure(f"non-finite u at stage {i}", ti, i)
        if need2[i]:
            if i == 0 and l2_first is not None:
                k2[0] = l2_first
            else:
                k2[i] = ops.L2(ti, ui)
        if i:
            vi = v.copy()
            for j in range(i + 1):
                if At[i, j] != 0.0:
                    vi = vi + (dt * At[i, j]) * k2[j]
            for j in range(i):
                if A[i, j] != 0.0:
                    vi = vi + (dt * A[i, j]) * k3[j]
            if not _finite(vi):
                raise NumericalFailure(f"non-finite v at stage {i}", ti, i)
        if i < s:
            k1.append(ops.L1(ti, ui, vi))
            k3.append(ops.L3(ti, ui, vi))
    return ui, vi, (k2[s] if need2[s] else None)


def pirk_step(system: SeparableWaveSystem, tableau: PirkTableau,
              state: SystemState, dt: float) -> SystemState:
    """Advance one step of a PIRK scheme by substitution."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return SystemState(state.t, state.u.copy(), state.v.copy())
    u, v, _ = _pirk_core(_Counter(system), tableau, state.t, state.u,
                         state.v, dt)
    return SystemState(state.t + dt, u, v)


def _imex2_core(ops, scheme: ImexSsp2Scheme, t, u, v, dt):
    g = scheme.gamma
    l2n = ops.L2(t + g * dt, u)
    u1 = u
    v1 = v + (g * dt) * l2n
    if not _finite(v1):
        raise NumericalFailure("non-finite v at stage 1", t, 1)
    f1 = ops.L1(t, u1, v1)
    h1 = ops.L3(t, u1, v1)
    u2 = u + dt * f1
    l22 = ops.L2(t + (1 - g) * dt, u2)
    v2 = v + dt * ((1 - 2 * g) * l2n + g * l22 + h1)
    if not (_finite(u2) and _finite(v2)):
        raise NumericalFailure("non-finite value at stage 2", t + dt, 2)
    f2 = ops.L1(t + dt, u2, v2)
    h2 = ops.L3(t + dt, u2, v2)
    un = u + (0.5 * dt) * (f1 + f2)
    vn = v + (0.5 * dt) * (l2n + l22 + h1 + h2)
    if not (_finite(un) and _finite(vn)):
        raise NumericalFailure("non-finite value at final stage", t + dt, 3)
    return un, vn


def imex_ssp2_step(system: SeparableWaveSystem, state: SystemState, dt: float,
                   scheme: ImexSsp2Scheme | None = None) -> SystemState:
    """One step of IMEX-SSP2(2,2,2)."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return SystemState(state.t, state.u.copy(), state.v.copy())
    scheme = scheme or ImexSsp2Scheme()
    u, v = _imex2_core(_Counter(system), scheme, state.t, state.u, state.v, dt)
    return SystemState(state.t + dt, u, v)


def _step_plan(t0: float, dt: float, t_end: float) -> tuple[int, float]:
    """Number of full steps and the final remainder (0 if none)."""
    span = t_end - t0
    n = int(math.floor(span / dt + 1e-9))
    if t0 + n * dt > t_end:
        n -= 1
    rem = t_end - (t0 + n * dt)
    if rem <= 1e-12 * max(abs(dt), 1.0) * max(1.0, abs(t_end)):
        rem = 0.0
    return n, rem


def evolve(system: SeparableWaveSystem, stepper, state: SystemState, dt: float,
           t_end: float, observer: Callable | None = None, stride: int = 1,
           backend: str = "auto", abort_above: float | None = None,
           keep: int = 1) -> EvolutionRecord:
    """Integrate from ``state.t`` to ``t_end``.

    The observer (default: the system's diagnostic, else the state vector)
    runs on the initial state, every ``stride`` steps and at ``t_end``.
    Time levels are ``t0 + n*dt``; a shortened last step lands on ``t_end``.
    With ``abort_above`` the run stops once ``|sample[0]|`` exceeds it.
    Only every ``keep``-th observation is recorded (plus the last one).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < state.t:
        raise ValueError("t_end precedes the initial time")
    if stride < 1 or keep < 1:
        raise ValueError("stride and keep must be >= 1")
    stepper = resolve(stepper)
    compiled = (system.kernels is not None and isinstance(stepper, PirkTableau)
                and system.kernels.diag is not None and observer is None)
    if backend == "compiled" and not compiled:
        raise ValueError("compiled backend needs jitted kernels, a PIRK "
                         "tableau and no Python observer")
    if compiled and backend != "python":
        return _evolve_compiled(system, stepper, state, dt, t_end, stride,
                                abort_above, keep)
    return _evolve_python(system, stepper, state, dt, t_end, observer, stride,
                          abort_above, keep)


def _evolve_python(system, stepper, state, dt, t_end, observer, stride,
                   abort_above, keep=1):
    if observer is None:
        if system.diagnostic is not None:
            observer = lambda st: system.diagnostic(st.t, st.u, st.v)  # noqa: E731
        else:
            observer = lambda st: np.concatenate([st.u, st.v])  # noqa: E731
    ops = _Counter(system)
    t0 = state.t
    n, rem = _step_plan(t0, dt, t_end)
    total = n + (1 if rem > 0 else 0)
    times, samples = [t0], [np.atleast_1d(np.asarray(observer(state), float))]
    u, v = state.u.copy(), state.v.copy()
    t = t0
    cache = None
    failed, reason, fail_t = False, "", None
    start = time.perf_counter()
    k = seen = 0
    for k in range(1, total + 1):
        h = dt if k <= n else rem
        try:
            if isinstance(stepper, PirkTableau):
                u, v, cache = _pirk_core(ops, stepper, t, u, v, h, cache)
            else:
                u, v = _imex2_core(ops, stepper, t, u, v, h)
        except NumericalFailure as exc:
            failed, reason, fail_t = True, str(exc), exc.t
            k -= 1
            break
        t = t0 + k * dt if k <= n else t_end
        if k % stride == 0 or k == total:
            snap = SystemState(t, u.copy(), v.copy())
            row = np.atleast_1d(np.asarray(observer(snap), float))
            seen += 1
            bad = abort_above is not None and not (abs(row[0]) <= abort_above)
            if seen % keep == 0 or k == total or bad:
                times.append(t)
                samples.append(row)
            if bad:
                failed, reason, fail_t = True, "blow-up threshold exceeded", t
                break
    wall = time.perf_counter() - start
    return EvolutionRecord(np.array(times), np.array(samples),
                           SystemState(t, u, v), dict(ops.counts), k, wall,
                           failed, fail_t, reason)


def _evolve_compiled(system, tab, state, dt, t_end, stride, abort_above,
                     keep=1):
    kern = system.kernels
    t0 = state.t
    n, rem = _step_plan(t0, dt, t_end)
    total = n + (1 if rem > 0 else 0)
    rows = total // (stride * keep) + 3
    out = np.empty((rows, kern.ndiag))
    times = np.empty(rows)
    counts = np.zeros(3, dtype=np.int64)
    blow = math.inf if abort_above is None else float(abort_above)
    u = np.array(state.u, dtype=float)
    v = np.array(state.v, dtype=float)
    A = tab.explicit_extended()
    At = np.ascontiguousarray(tab.a_tilde)
    cc = tab.abscissae
    need2 = _l2_columns(tab)
    start = time.perf_counter()
    status, steps, nrows, fail_t = _kernels.pirk_evolve(
        kern.l1, kern.l2, kern.l3, kern.diag, kern.params, A, At, cc, need2,
        u, v, t0, dt, n, rem, t_end, stride, keep, blow, out, times, counts)
    wall = time.perf_counter() - start
    reasons = {0: "", 1: "non-finite stage value", 2: "blow-up threshold exceeded"}
    t_last = t0 + steps * dt if steps <= n else t_end
    return EvolutionRecord(times[:nrows].copy(), out[:nrows].copy(),
                           SystemState(t_last, u, v),
                           {"L1": int(counts[0]), "L2": int(counts[1]),
                            "L3": int(counts[2])},
                           int(steps), wall, status != 0,
                           fail_t if status else None, reasons[int(status)])


# ---------------------------------------------------------------------------
# Linear test system and its update matrix


def linear_system(alpha1, alpha2, gamma1, gamma2, lam) -> SeparableWaveSystem:
    """System u' = a1 u + a2 v, v' = g1 u + g2 v + lam u (elementwise)."""
    return SeparableWaveSystem(
        dim_u=np.size(alpha1), dim_v=np.size(alpha1),
        L1=lambda t, u, v: alpha1 * u + alpha2 * v,
        L2=lambda t, u: lam * u,
        L3=lambda t, u, v: gamma1 * u + gamma2 * v,
    )


def linear_update_matrix_numeric(stepper, coeffs, dt: float) -> np.ndarray:
    """Update matrix of one step on the linear system, shape (..., 2, 2).

    ``coeffs`` carries ``alpha1_bar .. lambda_bar`` (scalars or arrays that
    broadcast together); columns are the images of (1, 0) and (0, 1).
    """
    stepper = resolve(stepper)
    c = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (
        coeffs.alpha1_bar, coeffs.alpha2_bar, coeffs.gamma1_bar,
        coeffs.gamma2_bar, coeffs.lambda_bar)))
    shape = c[0].shape
    flat = [x.reshape(-1) for x in c]
    sys = linear_system(*flat)
    m = flat[0].size
    M = np.empty((m, 2, 2))
    for col, (u0, v0) in enumerate(((1.0, 0.0), (0.0, 1.0))):
        st = SystemState(0.0, np.full(m, u0), np.full(m, v0))
        if isinstance(stepper, PirkTableau):
            nxt = pirk_step(sys, stepper, st, dt)
        else:
            nxt = imex_ssp2_step(sys, st, dt, stepper)
        M[:, 0, col] = nxt.u
        M[:, 1, col] = nxt.v
    return M.reshape(shape + (2, 2))
