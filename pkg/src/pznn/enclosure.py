"""Image enclosure of feed-forward networks by polynomial zonotopes.

Each layer is handled as a whole: the affine map is applied to the incoming
set, every neuron gets a quadratic abstraction on its interval bounds, and
the quadratic map is applied row-wise. Rows share one exponent matrix and
one independent-factor layout because the new exponents and the substituted
independent factors depend only on the incoming factors, never on the
neuron. Only the approximation-error factors are private to a neuron.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approx import SCHEMES, approximate
from .interval import Interval
from .network import Activation, Layer, Network, act_eval
from .pz import (
    CompactRecord,
    FactorAssignment,
    PolynomialZonotope,
    QuadLayout,
    ReductionRecord,
    affine_map,
    compact_with_record,
    interval_enclosure,
    minkowski_sum_interval,
    quad_witness_beta,
    quadratic_map_rows,
    reduce_order_with_record,
    replay_compact,
    replay_reduction,
)


@dataclass(frozen=True)
class ApproxPolicy:
    """How each layer is abstracted.

    ``schemes`` gives the scheme of the first layers in order; later layers
    use ``default``. The out-of-the-box policy fits a regression quadratic on
    the first two layers and falls back to linear relaxations afterwards.
    """
    schemes: tuple = ("regression", "regression")
    default: str = "linear"
    samples: int = 10
    precision: float = 1e-3
    order: float = 50.0
    compact: bool = True

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        for s in self.schemes + (self.default,):
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}; expected one of {SCHEMES}")
        if self.samples < 3:
            raise ValueError("regression needs at least 3 samples")
        if self.precision <= 0:
            raise ValueError("sampling precision must be positive")
        if self.order < 1:
            raise ValueError("order threshold must be at least 1")

    def scheme_for(self, layer_index: int) -> str:
        if layer_index < len(self.schemes):
            return self.schemes[layer_index]
        return self.default

    @classmethod
    def uniform(cls, scheme: str, **kw) -> "ApproxPolicy":
        return cls(schemes=(), default=scheme, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ApproxPolicy":
        kw = {}
        if "schemes" in d:
            kw["schemes"] = tuple(d["schemes"])
        for key in ("default", "samples", "precision", "order", "compact"):
            if key in d:
                kw[key] = d[key]
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "schemes": list(self.schemes), "default": self.default,
            "samples": self.samples, "precision": self.precision,
            "order": self.order, "compact": self.compact,
        }


@dataclass
class LayerRecord:
    act: Activation
    lower: np.ndarray
    upper: np.ndarray
    approx: list = field(default_factory=list)
    a1: np.ndarray | None = None
    a2: np.ndarray | None = None
    a3: np.ndarray | None = None
    mode: str = "affine"            # affine | linear | quadratic
    layout: QuadLayout | None = None
    err_dims: np.ndarray | None = None
    err_mid: np.ndarray | None = None
    err_rad: np.ndarray | None = None
    compact: CompactRecord | None = None
    reduction: ReductionRecord | None = None
    stats: dict = field(default_factory=dict)


@dataclass
class EnclosureTrace:
    layers: list
    input_box: Interval | None = None
    input_dims: np.ndarray | None = None


def layer_enclosure(pz_in: PolynomialZonotope, layer: Layer, policy: ApproxPolicy,
                    index: int = 0):
    """Enclose the image of ``pz_in`` through one layer."""
    if pz_in.dim != layer.in_dim:
        raise ValueError(f"set dimension {pz_in.dim} does not match layer width {layer.in_dim}")
    pz = affine_map(layer.W, pz_in, layer.b)
    box = interval_enclosure(pz)
    rec = LayerRecord(layer.act, box.l, box.u)

    if layer.act is not Activation.IDENTITY:
        scheme = policy.scheme_for(index)
        approx = [
            approximate(layer.act, float(l), float(u), scheme, policy.samples, policy.precision)
            for l, u in zip(box.l, box.u)
        ]
        rec.approx = approx
        a1 = np.array([a.a1 for a in approx])
        a2 = np.array([a.a2 for a in approx])
        a3 = np.array([a.a3 for a in approx])
        rec.a1, rec.a2, rec.a3 = a1, a2, a3
        if np.any(a1 != 0):
            rec.mode = "quadratic"
            pz, rec.layout = quadratic_map_rows(pz, a1, a2, a3)
        else:
            rec.mode = "linear"
            pz = PolynomialZonotope(a2 * pz.c + a3, a2[:, None] * pz.G,
                                    a2[:, None] * pz.GI, pz.E)
        d_lo = np.array([a.d_lo for a in approx])
        d_hi = np.array([a.d_hi for a in approx])
        rec.err_mid = 0.5 * (d_lo + d_hi)
        rec.err_rad = 0.5 * (d_hi - d_lo)
        rec.err_dims = np.flatnonzero(rec.err_rad > 0)
        pz = minkowski_sum_interval(pz, Interval(d_lo, d_hi))

    if policy.compact:
        pz, rec.compact = compact_with_record(pz)
    if pz.order() > policy.order:
        pz, rec.reduction = reduce_order_with_record(pz, policy.order)
    rec.stats = pz.stats()
    return pz, rec


def image_enclosure(net: Network, X0, policy: ApproxPolicy | None = None):
    """Enclose the image of ``X0`` (an :class:`Interval` or a polynomial
    zonotope) through ``net``. Returns the output set and a trace for
    witness replay.

    The dependent factors of the output are those of ``X0`` in the same
    order, so the result can be combined with ``X0`` without losing
    dependencies.
    """
    policy = policy or ApproxPolicy()
    trace = EnclosureTrace([])
    if isinstance(X0, Interval):
        trace.input_box = X0
        trace.input_dims = np.flatnonzero(X0.radius > 0)
        pz = PolynomialZonotope.from_interval(X0)
    else:
        pz = X0
    if pz.dim != net.input_dim:
        raise ValueError(f"input set has dimension {pz.dim}, network expects {net.input_dim}")
    for i, layer in enumerate(net.layers):
        pz, rec = layer_enclosure(pz, layer, policy, i)
        trace.layers.append(rec)
    return pz, trace


def _input_factors(trace: EnclosureTrace, x0: np.ndarray):
    box = trace.input_box
    if not np.all(box.contains(x0, tol=1e-12)):
        raise ValueError("input point lies outside the initial set")
    d = trace.input_dims
    alpha = np.zeros((x0.shape[0], box.dim))
    alpha[:, d] = (x0[:, d] - box.center[d]) / box.radius[d]
    return np.clip(alpha, -1.0, 1.0), np.zeros((x0.shape[0], 0))


def image_witness(trace: EnclosureTrace, net: Network, x0, fa=None):
    """Factor values under which the enclosure evaluates to ``forward(net, x0)``.

    ``x0`` is one input or an (N, n) batch. For a box input the starting
    factors follow from ``x0``; for a polynomial-zonotope input pass the
    assignment ``fa`` (a :class:`FactorAssignment` or an ``(alpha, beta)``
    pair of batches) that produces ``x0``. A single input returns a
    :class:`FactorAssignment`, a batch returns ``(alpha, beta)`` arrays.
    """
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    y = np.atleast_2d(x0)
    if fa is None:
        if trace.input_box is None:
            raise ValueError("a polynomial-zonotope input needs an explicit assignment")
        alpha, beta = _input_factors(trace, y)
    elif isinstance(fa, FactorAssignment):
        alpha, beta = fa.alpha[None, :], fa.beta[None, :]
    else:
        alpha, beta = (np.atleast_2d(np.asarray(v, dtype=float)) for v in fa)

    for layer, rec in zip(net.layers, trace.layers):
        z = y @ layer.W.T + layer.b
        y = act_eval(layer.act, z)
        if rec.mode == "quadratic":
            full = quad_witness_beta(rec.layout.E, rec.layout.q, alpha, beta)
            beta = np.clip(full[:, rec.layout.ind_keep], -1.0, 1.0)
        if rec.mode != "affine":
            k = rec.err_dims
            g = rec.a1[k] * z[:, k] ** 2 + rec.a2[k] * z[:, k] + rec.a3[k]
            e = (y[:, k] - g - rec.err_mid[k]) / rec.err_rad[k]
            beta = np.hstack([beta, np.clip(e, -1.0, 1.0)])
        if rec.compact is not None:
            alpha, beta = replay_compact(rec.compact, alpha, beta)
        if rec.reduction is not None:
            alpha, beta = replay_reduction(rec.reduction, alpha, beta)

    if single:
        return FactorAssignment(alpha[0], beta[0])
    return alpha, beta
