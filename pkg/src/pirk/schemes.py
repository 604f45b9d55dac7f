"""Coefficient tableaus for the ERK, PIRK and IMEX schemes.

Every scheme except IMEX-SSP2(2,2,2) is stored in the (s+1)-stage additive
layout: an explicit part ``(a, b, c)`` of size ``s`` and an implicit part
``a_tilde`` of size ``s+1`` whose last row is ``b_tilde``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SchemeId",
    "PIRK1Custom",
    "PIRK2Custom",
    "PIRK3Custom",
    "PIRK4Custom",
    "PirkTableau",
    "ImexSsp2Scheme",
    "OrderCondition",
    "OrderReport",
    "erk_tableau",
    "pirk_tableau",
    "resolve",
    "check_order_conditions",
    "PIRK4_COEFFS",
    "ERK4_C",
    "IMEX_SSP3_C1",
]


class SchemeId(enum.Enum):
    ERK1 = "erk1"
    ERK2 = "erk2"
    ERK3 = "erk3"
    ERK4 = "erk4"
    PIRK1 = "pirk1"
    PIRK2a = "pirk2a"
    PIRK2b = "pirk2b"
    PIRK3a = "pirk3a"
    PIRK3b = "pirk3b"
    PIRK4 = "pirk4"
    IMEX_SSP2_222 = "imex-ssp2"
    IMEX_SSP3_433 = "imex-ssp3"

    @classmethod
    def parse(cls, name: str) -> "SchemeId":
        key = name.strip().lower().replace("_", "-")
        aliases = {"imex2": "imex-ssp2", "imex3": "imex-ssp3",
                   "imex-ssp2-222": "imex-ssp2", "imex-ssp3-433": "imex-ssp3"}
        key = aliases.get(key, key)
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown scheme {name!r}")


def _check_finite(*values: float) -> None:
    if not all(math.isfinite(float(v)) for v in values):
        raise ValueError(f"scheme coefficients must be finite, got {values}")


@dataclass(frozen=True)
class PIRK1Custom:
    c1: float

    def __post_init__(self):
        _check_finite(self.c1)


@dataclass(frozen=True)
class PIRK2Custom:
    c1: float
    c2: float

    def __post_init__(self):
        _check_finite(self.c1, self.c2)


@dataclass(frozen=True)
class PIRK3Custom:
    c1: float
    c2: float

    def __post_init__(self):
        _check_finite(self.c1, self.c2)


@dataclass(frozen=True)
class PIRK4Custom:
    coeffs: tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.coeffs) != 5:
            raise ValueError("PIRK4 needs five free coefficients")
        _check_finite(*self.coeffs)


# ---------------------------------------------------------------------------
# Explicit SSP bases

_ERK4_A = {
    (1, 0): 0.391752226571890,
    (2, 0): 0.217669096261169,
    (2, 1): 0.368410593050371,
    (3, 0): 0.0826920866578107,
    (3, 1): 0.139958502191895,
    (3, 2): 0.251891774271694,
    (4, 0): 0.0679662836371149,
    (4, 1): 0.115034698504631,
    (4, 2): 0.207034898597386,
    (4, 3): 0.544974750228521,
}
_ERK4_B = (0.146811876084787, 0.248482909444976, 0.104258830331981,
           0.274438900901351, 0.226007483236906)

PIRK4_COEFFS = (0.13761208339219633, 0.2042433556378285, 0.0904666765339173,
                0.3966145239174311, -0.00984245655482246)
# ERK4 written in the PIRK4 family: only the (5,3) implicit entry survives.
ERK4_C = (0.0, 0.0, 0.0, _ERK4_A[(4, 2)], 0.0)

IMEX_SSP3_C1 = 0.24169426078821


def _explicit_base(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order == 1:
        return np.zeros((1, 1)), np.array([1.0])
    if order == 2:
        return np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([0.5, 0.5])
    if order == 3:
        a = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.25, 0.0]])
        return a, np.array([1 / 6, 1 / 6, 2 / 3])
    if order == 4:
        a = np.zeros((5, 5))
        for (i, j), val in _ERK4_A.items():
            a[i, j] = val
        return a, np.array(_ERK4_B)
    raise ValueError(f"ERK order must be 1..4, got {order}")


@dataclass(frozen=True, eq=False)
class PirkTableau:
    """Additive tableau of an s-stage PIRK scheme.

    ``a`` (s x s, strictly lower), ``b`` and ``c`` (length s) act on L1 and
    L3; ``a_tilde`` ((s+1) x (s+1), lower with diagonal) acts on L2 and its
    last row is ``b_tilde``.  A pure ERK tableau has ``a_tilde = 0``.
    """

    name: str
    order: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    a_tilde: np.ndarray
    coefficients: tuple[float, ...] = ()
    pure_explicit: bool = False

    def __post_init__(self):
        for arr in (self.a, self.b, self.c, self.a_tilde):
            arr.setflags(write=False)

    @property
    def stages(self) -> int:
        return len(self.b)

    @property
    def b_tilde(self) -> np.ndarray:
        return self.a_tilde[-1]

    @property
    def abscissae(self) -> np.ndarray:
        """Stage times c_1..c_s followed by c_{s+1} = 1."""
        return np.append(self.c, 1.0)

    def explicit_extended(self) -> np.ndarray:
        """Explicit part in the (s+1) layout, row s+1 holding b."""
        s = self.stages
        out = np.zeros((s + 1, s + 1))
        out[:s, :s] = self.a
        out[s, :s] = self.b
        return out

    def invariant_residuals(self) -> dict[str, float]:
        s = self.stages
        res = {
            "c_rowsum": float(np.max(np.abs(self.a.sum(axis=1) - self.c))),
            "a_strict_lower": float(np.max(np.abs(np.triu(self.a)))),
            "a_tilde_lower": float(np.max(np.abs(np.triu(self.a_tilde, 1)))),
        }
        if not self.pure_explicit:
            res["c_tilde_rowsum"] = float(
                np.max(np.abs(self.a_tilde[:s].sum(axis=1) - self.c)))
            res["b_tilde_sum"] = abs(float(self.b_tilde.sum()) - 1.0)
        return res


def _make(name, order, a, b, a_tilde, coefficients=(), pure_explicit=False):
    a = np.asarray(a, dtype=float)
    return PirkTableau(name=name, order=order, a=a, b=np.asarray(b, float),
                       c=a.sum(axis=1), a_tilde=np.asarray(a_tilde, float),
                       coefficients=tuple(float(x) for x in coefficients),
                       pure_explicit=pure_explicit)


def erk_tableau(order: int) -> PirkTableau:
    """Optimal SSP ERK tableau with a vanishing implicit part."""
    if order not in (1, 2, 3, 4):
        raise ValueError(f"ERK order must be 1..4, got {order}")
    a, b = _explicit_base(order)
    s = len(b)
    return _make(f"ERK{order}", order, a, b, np.zeros((s + 1, s + 1)),
                 pure_explicit=True)


def explicit_padding(order: int) -> PirkTableau:
    """ERK tableau with L2 treated explicitly (a_tilde = a, b_tilde = (b, 0))."""
    a, b = _explicit_base(order)
    s = len(b)
    at = np.zeros((s + 1, s + 1))
    at[:s, :s] = a
    at[s, :s] = b
    return _make(f"ERK{order}", order, a, b, at)


def _pirk1(c1: float, name: str) -> PirkTableau:
    a, b = _explicit_base(1)
    at = np.array([[0.0, 0.0], [1.0 - c1, c1]])
    return _make(name, 1, a, b, at, (c1,))


def _pirk2(c1: float, c2: float, name: str) -> PirkTableau:
    a, b = _explicit_base(2)
    at = np.array([
        [0.0, 0.0, 0.0],
        [1.0 - c1, c1, 0.0],
        [0.5, c2, 0.5 - c2],
    ])
    return _make(name, 2, a, b, at, (c1, c2))


def _pirk3(c1: float, c2: float, name: str) -> PirkTableau:
    a, b = _explicit_base(3)
    at = np.array([
        [0.0, 0.0, 0.0, 0.0],
        [1.0 - c1, c1, 0.0, 0.0],
        [(c1 + 2 * c2) / 2, c2, (1 - c1 - 4 * c2) / 2, 0.0],
        [1 / 6, 1 / 6, 2 / 3, 0.0],
    ])
    return _make(name, 3, a, b, at, (c1, c2))


def _pirk4(coeffs, name: str) -> PirkTableau:
    c1, c2, c3, c4, c5 = (float(x) for x in coeffs)
    a, b = _explicit_base(4)
    a53 = a[4, 2]
    d4 = a53 - c4
    at = np.zeros((6, 6))
    at[1, 1] = c1
    at[1, 0] = a[1, 0] - c1
    at[2, 2] = c2
    at[2, 1] = a[2, 1] + 0.35732150216762254 * c1 - 1.4960468621714111 * c2
    at[2, 0] = a[2, 0] + (a[2, 1] - at[2, 1]) - c2
    at[3, 3] = c3
    at[3, 1] = (a[3, 1] - 1.1710769982806357 * c1 + 0.5683454330255046 * c2
                - 1.2113329061942606 * c3 - 1.2320330135900457 * d4
                + 6.103552261439627 * c5)
    # this entry couples to C2 (not C1); only that choice satisfies the
    # fourth-order coupling conditions
    at[3, 2] = (a[3, 2] - 0.37989814851159776 * c2 + 0.8235256827462162 * d4
                - 4.079786814017799 * c5)
    at[3, 0] = a[3, 0] + (a[3, 1] - at[3, 1]) + (a[3, 2] - at[3, 2]) - c3
    at[4, 4] = c5
    at[4, 2] = c4
    at[4, 1] = (a[4, 1] + 0.1577481084030307 * c1 + 1.4709109036585493 * c3
                + 1.4960468621714111 * d4 - 4.121723862609585 * c5)
    at[4, 3] = a[4, 3] - 1.2142912127103236 * c3 + 1.432293346906654 * c5
    at[4, 0] = (a[4, 0] + (a[4, 1] - at[4, 1]) + d4
                + (a[4, 3] - at[4, 3]) - c5)
    at[5, :5] = b
    return _make(name, 4, a, b, at, (c1, c2, c3, c4, c5))


@dataclass(frozen=True)
class ImexSsp2Scheme:
    """IMEX-SSP2(2,2,2) in its own two-stage layout, gamma = 1 - 1/sqrt(2)."""

    name: str = "IMEX-SSP2(2,2,2)"
    order: int = 2
    gamma: float = 1.0 - 1.0 / math.sqrt(2.0)

    @property
    def stages(self) -> int:
        return 2


def pirk_tableau(scheme) -> PirkTableau:
    """Full tableau for a named scheme or a custom-coefficient variant."""
    if isinstance(scheme, PIRK1Custom):
        return _pirk1(scheme.c1, f"PIRK1(C1={scheme.c1!r})")
    if isinstance(scheme, PIRK2Custom):
        return _pirk2(scheme.c1, scheme.c2,
                      f"PIRK2(C1={scheme.c1!r},C2={scheme.c2!r})")
    if isinstance(scheme, PIRK3Custom):
        return _pirk3(scheme.c1, scheme.c2,
                      f"PIRK3(C1={scheme.c1!r},C2={scheme.c2!r})")
    if isinstance(scheme, PIRK4Custom):
        return _pirk4(scheme.coeffs, "PIRK4(custom)")
    if isinstance(scheme, str):
        scheme = SchemeId.parse(scheme)
    r2, r3 = math.sqrt(2.0), math.sqrt(3.0)
    table = {
        SchemeId.ERK1: lambda: _pirk1(0.0, "ERK1"),
        SchemeId.PIRK1: lambda: _pirk1(1.0, "PIRK1"),
        SchemeId.ERK2: lambda: _pirk2(0.0, 0.5, "ERK2"),
        SchemeId.PIRK2a: lambda: _pirk2(0.5, 0.0, "PIRK2a"),
        SchemeId.PIRK2b: lambda: _pirk2(1 - r2 / 2, (r2 - 1) / 2, "PIRK2b"),
        SchemeId.ERK3: lambda: _pirk3(0.0, 0.25, "ERK3"),
        SchemeId.PIRK3a: lambda: _pirk3(0.25, 1 / 16, "PIRK3a"),
        SchemeId.PIRK3b: lambda: _pirk3((3 - r3) / 6, (r3 - 1) / 8, "PIRK3b"),
        SchemeId.IMEX_SSP3_433: lambda: _pirk3(
            IMEX_SSP3_C1, (1 - 3 * IMEX_SSP3_C1) / 4, "IMEX-SSP3(4,3,3)"),
        SchemeId.ERK4: lambda: _pirk4(ERK4_C, "ERK4"),
        SchemeId.PIRK4: lambda: _pirk4(PIRK4_COEFFS, "PIRK4"),
    }
    if scheme == SchemeId.IMEX_SSP2_222:
        raise ValueError("IMEX-SSP2(2,2,2) has no PIRK layout; use resolve()")
    try:
        return table[scheme]()
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}") from None


def resolve(scheme):
    """Stepper object for any scheme identity (tableau or IMEX-SSP2)."""
    if isinstance(scheme, (PirkTableau, ImexSsp2Scheme)):
        return scheme
    if isinstance(scheme, str):
        scheme = SchemeId.parse(scheme)
    if scheme == SchemeId.IMEX_SSP2_222:
        return ImexSsp2Scheme()
    return pirk_tableau(scheme)


# ---------------------------------------------------------------------------
# Order conditions
#
# Trees are nested tuples (colour, children) with colour "E" (explicit
# family, L1 and L3) or "I" (implicit family, L2).  Because L2 depends on u
# only and u is advanced by L1 alone, any tree with an I-node directly above
# another I-node has a vanishing elementary differential for the systems
# these schemes target, so those trees impose no condition.


def _trees(order: int, colours: tuple[str, ...]) -> list[tuple]:
    cache: dict[int, list[tuple]] = {}

    def build(n: int) -> list[tuple]:
        if n in cache:
            return cache[n]
        out = []
        for forest in _forests(n - 1):
            for colour in colours:
                out.append((colour, forest))
        cache[n] = out
        return out

    def _forests(n: int) -> list[tuple]:
        if n == 0:
            return [()]
        result = []
        for parts in _partitions(n):
            pools = []
            for size, mult in sorted(_count(parts).items()):
                pools.append(list(itertools.combinations_with_replacement(
                    sorted(build(size), key=repr), mult)))
            for combo in itertools.product(*pools):
                forest = tuple(sorted((t for grp in combo for t in grp), key=repr))
                result.append(forest)
        return result

    return build(order)


def _partitions(n: int, largest: int | None = None):
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for k in range(min(n, largest), 0, -1):
        for rest in _partitions(n - k, k):
            yield (k,) + rest


def _count(parts):
    out: dict[int, int] = {}
    for p in parts:
        out[p] = out.get(p, 0) + 1
    return out


def _size(tree) -> int:
    return 1 + sum(_size(ch) for ch in tree[1])


def _density(tree) -> int:
    out = _size(tree)
    for ch in tree[1]:
        out *= _density(ch)
    return out


def _signature(tree) -> str:
    colour, children = tree
    if not children:
        return colour
    return colour + "[" + ",".join(_signature(ch) for ch in children) + "]"


def _relevant(tree) -> bool:
    colour, children = tree
    for ch in children:
        if colour == "I" and ch[0] == "I":
            return False
        if not _relevant(ch):
            return False
    return True


@dataclass(frozen=True)
class OrderCondition:
    tree: str
    order: int
    residual: float
    passed: bool


@dataclass(frozen=True)
class OrderReport:
    scheme: str
    order: int
    conditions: tuple[OrderCondition, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def max_residual(self) -> float:
        return max((c.residual for c in self.conditions), default=0.0)

    def failures(self) -> list[OrderCondition]:
        return [c for c in self.conditions if not c.passed]


def check_order_conditions(tab: PirkTableau, order: int | None = None,
                           tol: float = 1e-12) -> OrderReport:
    """Evaluate additive RK order conditions up to ``order``.

    Besides the tree conditions, the abscissa consistency rows
    (sum_j a_ij = c_i, sum_j a~_ij = c_i) are reported as order-0 entries.
    """
    order = tab.order if order is None else order
    s = tab.stages
    mats = {"E": tab.explicit_extended(), "I": np.asarray(tab.a_tilde)}
    colours = ("E",) if tab.pure_explicit else ("E", "I")

    def weights(tree) -> np.ndarray:
        psi = np.ones(s + 1)
        for ch in tree[1]:
            psi = psi * (mats[ch[0]] @ weights(ch))
        return psi

    conds = []
    for name, val in tab.invariant_residuals().items():
        conds.append(OrderCondition(name, 0, val, val <= tol))
    for p in range(1, order + 1):
        for tree in _trees(p, colours):
            if not _relevant(tree):
                continue
            b = mats[tree[0]][s]
            res = abs(float(b @ weights(tree)) - 1.0 / _density(tree))
            conds.append(OrderCondition(_signature(tree), p, res, res <= tol))
    return OrderReport(tab.name, order, tuple(conds), tol)

