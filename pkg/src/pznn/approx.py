"""Quadratic abstractions of activation functions on an interval, together
with rigorous bounds on the approximation error ``d(x) = mu(x) - g(x)``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import interval
from .network import DERIVATIVE_BOUND, Activation, act_d1, act_d2, act_eval

SCHEMES = ("regression", "relu_closed_form", "taylor", "linear", "best_of")


@dataclass(frozen=True)
class QuadApprox:
    a1: float
    a2: float
    a3: float
    d_lo: float
    d_hi: float
    scheme: str = ""

    def __post_init__(self):
        if not self.d_lo <= self.d_hi:
            raise ValueError(f"error bounds out of order: [{self.d_lo}, {self.d_hi}]")

    @property
    def coeffs(self) -> tuple[float, float, float]:
        return self.a1, self.a2, self.a3

    @property
    def width(self) -> float:
        return self.d_hi - self.d_lo

    def __call__(self, x):
        return self.a1 * np.square(x) + self.a2 * x + self.a3


def _quad(coeffs, x):
    a1, a2, a3 = coeffs
    return a1 * x * x + a2 * x + a3


def fit_quadratic(f, l: float, u: float, N: int = 10):
    """Least-squares quadratic through ``N`` uniform samples of ``f`` on [l, u].

    The fit is done in the normalised variable t = (x - m) / r, which spans
    the same model class and keeps the normal equations well conditioned.
    """
    if not l < u:
        raise ValueError(f"regression needs l < u, got [{l}, {u}]")
    if N < 3:
        raise ValueError("regression needs at least 3 samples")
    m, r = 0.5 * (l + u), 0.5 * (u - l)
    t = np.linspace(-1.0, 1.0, N)
    y = f(m + r * t)
    A = np.stack([t * t, t, np.ones(N)], axis=1)
    b1, b2, b3 = np.linalg.solve(A.T @ A, A.T @ y)
    a1 = b1 / r ** 2
    a2 = b2 / r - 2.0 * b1 * m / r ** 2
    a3 = b1 * m ** 2 / r ** 2 - b2 * m / r + b3
    return float(a1), float(a2), float(a3)


def approx_regression(act: Activation, l: float, u: float, N: int = 10):
    """Regression quadratic of an activation function."""
    return fit_quadratic(lambda x: act_eval(act, x), l, u, N)


def approx_relu_closed_form(l: float, u: float):
    """Quadratic with g(l) = 0, g'(l) = 0 and g(u) = u."""
    if not (l < 0 < u):
        raise ValueError(f"closed form needs l < 0 < u, got [{l}, {u}]")
    w2 = (u - l) ** 2
    return u / w2, -2.0 * l * u / w2, u ** 2 * (2 * l - u) / w2 + u


def approx_taylor(act: Activation, l: float, u: float):
    """Second-order Taylor polynomial at the interval midpoint."""
    if act not in (Activation.SIGMOID, Activation.TANH):
        raise ValueError(f"Taylor expansion is for sigmoid/tanh, got {act.value}")
    if l > u:
        raise ValueError("empty interval")
    xs = 0.5 * (l + u)
    f0, f1, f2 = (float(fn(act, xs)) for fn in (act_eval, act_d1, act_d2))
    return 0.5 * f2, f1 - f2 * xs, f0 - f1 * xs + 0.5 * f2 * xs ** 2


def approx_linear(act: Activation, l: float, u: float) -> QuadApprox:
    """Zonotope (DeepZ-style) linear relaxation with its closed-form error."""
    if act is Activation.RELU:
        if not (l < 0 < u):
            raise ValueError(f"linear ReLU relaxation needs l < 0 < u, got [{l}, {u}]")
        lam = u / (u - l)
        e = -u * l / (2 * (u - l))
        return QuadApprox(0.0, lam, e, -e, e, "linear")
    if act in (Activation.SIGMOID, Activation.TANH):
        if l > u:
            raise ValueError("empty interval")
        ml, mu = float(act_eval(act, l)), float(act_eval(act, u))
        a2 = min(float(act_d1(act, l)), float(act_d1(act, u)))
        a3 = 0.5 * (mu + ml - a2 * (u + l))
        # d is monotone on [l, u] because a2 is the smaller endpoint slope
        d_hi = max(0.5 * (mu - ml - a2 * (u - l)), 0.0)
        return QuadApprox(0.0, a2, a3, -d_hi, d_hi, "linear")
    raise ValueError(f"no linear relaxation for {act.value}")


def _piece_extrema(a1: float, b: float, a0: float, lo: float, hi: float):
    """Range of a1 x^2 + b x + a0 over [lo, hi]."""
    xs = [lo, hi]
    if a1 != 0.0:
        xs_ = -0.5 * b / a1
        if lo < xs_ < hi:
            xs.append(xs_)
    vals = [a1 * x * x + b * x + a0 for x in xs]
    return min(vals), max(vals)


def error_bounds_relu(coeffs, l: float, u: float):
    """Exact range of ``relu(x) - g(x)`` by splitting [l, u] at zero."""
    if not (l < 0 < u):
        raise ValueError(f"ReLU error bound needs l < 0 < u, got [{l}, {u}]")
    a1, a2, a3 = coeffs
    lo1, hi1 = _piece_extrema(-a1, -a2, -a3, l, 0.0)
    lo2, hi2 = _piece_extrema(-a1, 1.0 - a2, -a3, 0.0, u)
    return min(lo1, lo2), max(hi1, hi2)


def sampling_points(act: Activation, coeffs, l: float, u: float, delta: float):
    a1, a2, _ = coeffs
    mu_bar = DERIVATIVE_BOUND[act]
    g_lo = min(2 * a1 * l + a2, 2 * a1 * u + a2)
    g_hi = max(2 * a1 * l + a2, 2 * a1 * u + a2)
    slope = max(abs(g_hi), abs(mu_bar - g_lo))
    if u == l or slope == 0.0:
        steps = 1
    else:
        steps = max(1, math.ceil((u - l) * slope / delta))
    return np.linspace(l, u, steps + 1)


def error_bounds_sampling(act: Activation, coeffs, l: float, u: float, delta: float = 1e-3):
    """Bounds on ``mu(x) - g(x)`` from a uniform sample whose spacing makes
    the result at most ``delta`` looser than the true extrema."""
    if act not in DERIVATIVE_BOUND:
        raise ValueError(f"sampling bound is for sigmoid/tanh, got {act.value}")
    if l > u:
        raise ValueError("empty interval")
    if delta <= 0:
        raise ValueError("precision must be positive")
    x = sampling_points(act, coeffs, l, u, delta)
    d = act_eval(act, x) - _quad(coeffs, x)
    return float(d.min()) - delta, float(d.max()) + delta


def _inflate(lo: float, hi: float, coeffs, l: float, u: float):
    # covers rounding in the error evaluation itself
    scale = max(1.0, abs(l), abs(u)) * (1.0 + sum(abs(a) for a in coeffs))
    e = interval.EPS * scale
    return lo - e, hi + e


def error_bounds(act: Activation, coeffs, l: float, u: float, delta: float = 1e-3):
    if act is Activation.RELU:
        lo, hi = error_bounds_relu(coeffs, l, u)
    elif act is Activation.IDENTITY:
        lo, hi = _piece_extrema(-coeffs[0], 1.0 - coeffs[1], -coeffs[2], l, u)
    else:
        lo, hi = error_bounds_sampling(act, coeffs, l, u, delta)
    return _inflate(lo, hi, coeffs, l, u)


def exact_approx(act: Activation, l: float, u: float) -> QuadApprox | None:
    """Zero-error relation when one exists on [l, u]."""
    if act is Activation.IDENTITY:
        return QuadApprox(0.0, 1.0, 0.0, 0.0, 0.0, "exact")
    if l == u:
        return QuadApprox(0.0, 0.0, float(act_eval(act, l)), 0.0, 0.0, "exact")
    if act is Activation.RELU:
        if l >= 0:
            return QuadApprox(0.0, 1.0, 0.0, 0.0, 0.0, "exact")
        if u <= 0:
            return QuadApprox(0.0, 0.0, 0.0, 0.0, 0.0, "exact")
    return None


def applicable_schemes(act: Activation) -> tuple[str, ...]:
    if act is Activation.RELU:
        return ("regression", "relu_closed_form", "linear")
    if act in (Activation.SIGMOID, Activation.TANH):
        return ("regression", "taylor", "linear")
    return ("linear",)


def approximate(act: Activation, l: float, u: float, scheme: str = "regression",
                N: int = 10, delta: float = 1e-3) -> QuadApprox:
    """Quadratic abstraction of ``act`` on [l, u] with error bounds.

    Exact relations (identity, degenerate interval, inactive/active ReLU) are
    used whenever they apply, regardless of ``scheme``.
    """
    ex = exact_approx(act, l, u)
    if ex is not None:
        return ex
    if scheme == "best_of":
        cands = [approximate(act, l, u, s, N, delta) for s in applicable_schemes(act)]
        return min(cands, key=lambda a: a.width)
    if scheme == "linear":
        a = approx_linear(act, l, u)
        lo, hi = _inflate(a.d_lo, a.d_hi, a.coeffs, l, u)
        return QuadApprox(a.a1, a.a2, a.a3, lo, hi, "linear")
    if scheme == "regression":
        coeffs = approx_regression(act, l, u, N)
    elif scheme == "relu_closed_form":
        if act is not Activation.RELU:
            coeffs = approx_regression(act, l, u, N)
            scheme = "regression"
        else:
            coeffs = approx_relu_closed_form(l, u)
    elif scheme == "taylor":
        if act is Activation.RELU:
            coeffs = approx_relu_closed_form(l, u)
            scheme = "relu_closed_form"
        else:
            coeffs = approx_taylor(act, l, u)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    lo, hi = error_bounds(act, coeffs, l, u, delta)
    return QuadApprox(*coeffs, lo, hi, scheme)
