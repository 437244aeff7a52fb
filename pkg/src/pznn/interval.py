"""Scalar and vector interval arithmetic.

Rounding is not directed. Results of the elementary functions are widened
by ``EPS`` instead, which is good enough for desk-scale validation but not a
rigorous enclosure at ULP level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS = 1e-12


def set_epsilon(eps: float) -> None:
    """Change the global outward-widening constant."""
    global EPS
    if eps < 0:
        raise ValueError("epsilon must be non-negative")
    EPS = float(eps)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@dataclass(frozen=True)
class ScalarInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float) -> "ScalarInterval":
        return cls(float(x), float(x))

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def rad(self) -> float:
        return 0.5 * (self.hi - self.lo)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def subset_of(self, other: "ScalarInterval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def widen(self, eps: float | None = None) -> "ScalarInterval":
        e = EPS if eps is None else eps
        return ScalarInterval(self.lo - e, self.hi + e)

    def __add__(self, other):
        return iv_add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return iv_sub(self, _lift(other))

    def __rsub__(self, other):
        return iv_sub(_lift(other), self)

    def __mul__(self, other):
        return iv_mul(self, _lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return iv_div(self, _lift(other))

    def __rtruediv__(self, other):
        return iv_div(_lift(other), self)

    def __neg__(self):
        return iv_neg(self)

    def __pow__(self, k: int):
        return iv_pow_int(self, k)

    def __repr__(self):
        return f"[{self.lo!r}, {self.hi!r}]"


def _lift(x) -> ScalarInterval:
    if isinstance(x, ScalarInterval):
        return x
    return ScalarInterval.point(float(x))


def iv_add(a: ScalarInterval, b: ScalarInterval) -> ScalarInterval:
    return ScalarInterval(a.lo + b.lo, a.hi + b.hi)


def iv_sub(a: ScalarInterval, b: ScalarInterval) -> ScalarInterval:
    return ScalarInterval(a.lo - b.hi, a.hi - b.lo)


def iv_neg(a: ScalarInterval) -> ScalarInterval:
    return ScalarInterval(-a.hi, -a.lo)


def iv_mul(a: ScalarInterval, b: ScalarInterval) -> ScalarInterval:
    # 0 * inf counts as 0: the zero factor is exact
    prods = [0.0 if math.isnan(p) else p for p in (a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi)]
    return ScalarInterval(min(prods), max(prods))


def iv_div(a: ScalarInterval, b: ScalarInterval) -> ScalarInterval:
    if b.lo <= 0.0 <= b.hi:
        raise ZeroDivisionError(f"divisor {b!r} contains zero")
    return iv_mul(a, ScalarInterval(1.0 / b.hi, 1.0 / b.lo))


def _ipow(x: float, k: int) -> float:
    try:
        return x ** k
    except OverflowError:
        return math.copysign(math.inf, x) if k % 2 else math.inf


def iv_pow_int(a: ScalarInterval, k: int) -> ScalarInterval:
    if int(k) != k or k < 0:
        raise ValueError("only non-negative integer powers are supported")
    k = int(k)
    if k == 0:
        return ScalarInterval(1.0, 1.0)
    lo, hi = _ipow(a.lo, k), _ipow(a.hi, k)
    if k % 2 == 1:
        return ScalarInterval(lo, hi)
    if a.lo <= 0.0 <= a.hi:
        return ScalarInterval(0.0, max(lo, hi))
    return ScalarInterval(min(lo, hi), max(lo, hi))


def _contains_critical(lo: float, hi: float, offset: float) -> bool:
    # is there an integer k with offset + 2*pi*k in [lo, hi]
    k = math.ceil((lo - offset) / (2 * math.pi))
    return offset + 2 * math.pi * k <= hi


def _iv_sin(a: ScalarInterval) -> ScalarInterval:
    if a.width >= 2 * math.pi:
        return ScalarInterval(-1.0, 1.0)
    vals = (math.sin(a.lo), math.sin(a.hi))
    lo, hi = min(vals), max(vals)
    if _contains_critical(a.lo, a.hi, math.pi / 2):
        hi = 1.0
    if _contains_critical(a.lo, a.hi, -math.pi / 2):
        lo = -1.0
    return ScalarInterval(lo, hi)


def _iv_cos(a: ScalarInterval) -> ScalarInterval:
    return _iv_sin(ScalarInterval(a.lo + math.pi / 2, a.hi + math.pi / 2))


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


_MONOTONE = {
    "exp": _exp,
    "tanh": math.tanh,
    "sigmoid": _sigmoid,
    "sqrt": math.sqrt,
    "relu": lambda x: max(0.0, x),
}

_RANGES = {
    "sin": (-1.0, 1.0),
    "cos": (-1.0, 1.0),
    "tanh": (-1.0, 1.0),
    "sigmoid": (0.0, 1.0),
    "exp": (0.0, math.inf),
    "sqrt": (0.0, math.inf),
    "relu": (0.0, math.inf),
}


def iv_elem(f: str, a: ScalarInterval) -> ScalarInterval:
    """Enclose the image of ``a`` under the elementary function ``f``."""
    if f == "sqrt" and a.lo < 0:
        raise ValueError(f"sqrt of interval {a!r} with negative part")
    if f == "sin":
        r = _iv_sin(a)
    elif f == "cos":
        r = _iv_cos(a)
    elif f in _MONOTONE:
        fn = _MONOTONE[f]
        r = ScalarInterval(fn(a.lo), fn(a.hi))
    else:
        raise ValueError(f"unknown function {f!r}")
    r = r.widen()
    lo_cap, hi_cap = _RANGES[f]
    return ScalarInterval(max(r.lo, lo_cap), min(r.hi, hi_cap))


class Interval:
    """Axis-aligned box ``[l, u]`` in R^n."""

    def __init__(self, l, u):
        l = np.atleast_1d(np.array(l, dtype=float))
        u = np.atleast_1d(np.array(u, dtype=float))
        if l.ndim != 1 or l.shape != u.shape:
            raise ValueError(f"bound shapes differ: {l.shape} vs {u.shape}")
        if np.any(~(l <= u)):
            raise ValueError("lower bound exceeds upper bound")
        l.setflags(write=False)
        u.setflags(write=False)
        self.l = l
        self.u = u

    @property
    def dim(self) -> int:
        return self.l.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.u + self.l)

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (self.u - self.l)

    def widths(self) -> np.ndarray:
        return self.u - self.l

    def volume(self) -> float:
        return float(np.prod(self.u - self.l))

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        """Membership test; ``x`` may be one point or an (N, n) batch."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.l - tol) & (x <= self.u + tol), axis=-1)

    def subset_of(self, other: "Interval", tol: float = 0.0) -> bool:
        return bool(np.all(other.l - tol <= self.l) and np.all(self.u <= other.u + tol))

    def hull(self, other: "Interval") -> "Interval":
        return Interval(np.minimum(self.l, other.l), np.maximum(self.u, other.u))

    def scalar(self, i: int) -> ScalarInterval:
        return ScalarInterval(float(self.l[i]), float(self.u[i]))

    def bisect(self, dim: int) -> tuple["Interval", "Interval"]:
        m = 0.5 * (self.l[dim] + self.u[dim])
        u1 = self.u.copy()
        u1[dim] = m
        l2 = self.l.copy()
        l2[dim] = m
        return Interval(self.l, u1), Interval(l2, self.u)

    def to_dict(self) -> dict:
        return {"l": self.l.tolist(), "u": self.u.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Interval":
        return cls(d["l"], d["u"])

    def __eq__(self, other):
        if not isinstance(other, Interval):
            return NotImplemented
        return bool(np.array_equal(self.l, other.l) and np.array_equal(self.u, other.u))

    def __repr__(self):
        return f"Interval(l={self.l.tolist()}, u={self.u.tolist()})"
