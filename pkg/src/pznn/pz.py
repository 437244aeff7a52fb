"""Sparse polynomial zonotopes and the set operations needed for image
enclosure and closed-loop reachability.

A polynomial zonotope ``<c, G, GI, E>`` is the set

    { c + sum_i (prod_k alpha_k ** E[k, i]) G[:, i] + sum_j beta_j GI[:, j] }

over dependent factors ``alpha`` and independent factors ``beta`` in [-1, 1].
Dependent factors are identified by their row index in ``E``; every
dependency-aware operation assumes its operands share that row ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .interval import Interval


def _as_matrix(a, rows: int, dtype=float) -> np.ndarray:
    if a is None:
        return np.zeros((rows, 0), dtype=dtype)
    a = np.array(a, dtype=dtype)
    if a.size == 0:
        return np.zeros((rows, 0), dtype=dtype)
    if a.ndim == 1:
        a = a.reshape(rows, -1)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class PolynomialZonotope:
    """Immutable polynomial zonotope ``<c, G, GI, E>``."""

    def __init__(self, c, G=None, GI=None, E=None):
        c = np.atleast_1d(np.array(c, dtype=float))
        if c.ndim != 1:
            raise ValueError("center must be a vector")
        n = c.shape[0]
        G = _as_matrix(G, n)
        GI = _as_matrix(GI, n)
        if G.shape[0] != n or GI.shape[0] != n:
            raise ValueError(
                f"generator rows {G.shape[0]}, {GI.shape[0]} do not match dimension {n}"
            )
        h = G.shape[1]
        if E is None:
            if h:
                raise ValueError("dependent generators require an exponent matrix")
            E = np.zeros((0, 0))
        E = np.array(E, dtype=float)
        if E.ndim == 1:
            E = E.reshape(1, -1) if E.size else np.zeros((0, 0))
        if E.ndim != 2:
            raise ValueError("exponent matrix must be two-dimensional")
        if E.shape[0] == 0:
            E = np.zeros((0, h))
        if E.shape[1] != h:
            raise ValueError(f"exponent matrix has {E.shape[1]} columns, expected {h}")
        if np.any(E < 0) or np.any(E != np.round(E)):
            raise ValueError("exponents must be non-negative integers")
        E = E.astype(np.int64)
        self.c = _frozen(c)
        self.G = _frozen(G)
        self.GI = _frozen(GI)
        self.E = _frozen(E)

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def h(self) -> int:
        return self.G.shape[1]

    @property
    def q(self) -> int:
        return self.GI.shape[1]

    @property
    def p(self) -> int:
        return self.E.shape[0]

    def order(self) -> float:
        return (self.h + self.q) / self.dim if self.dim else 0.0

    def stats(self) -> dict:
        return {"n": self.dim, "h": self.h, "q": self.q, "p": self.p}

    @classmethod
    def from_interval(cls, box: Interval, dependent: bool = True) -> "PolynomialZonotope":
        """Box as a polynomial zonotope.

        With ``dependent=True`` every non-degenerate dimension gets its own
        dependent factor (row i of E belongs to input dimension i), so later
        set images stay correlated with the input.
        """
        r = box.radius
        nz = np.flatnonzero(r > 0)
        if dependent:
            G = np.diag(r)[:, nz]
            E = np.eye(box.dim, dtype=np.int64)[:, nz]
            return cls(box.center, G, None, E)
        return cls(box.center, None, np.diag(r)[:, nz], np.zeros((0, 0)))

    @classmethod
    def point(cls, x) -> "PolynomialZonotope":
        return cls(x)

    def with_factor_rows(self, p: int) -> "PolynomialZonotope":
        """Pad E with zero rows up to ``p`` dependent factors."""
        if p < self.p:
            raise ValueError("cannot drop factor rows")
        E = np.vstack([self.E, np.zeros((p - self.p, self.h), dtype=np.int64)])
        return PolynomialZonotope(self.c, self.G, self.GI, E)

    def to_dict(self) -> dict:
        return {
            "n": self.dim, "h": self.h, "q": self.q, "p": self.p,
            "c": self.c.tolist(),
            "G": self.G.tolist(),
            "GI": self.GI.tolist(),
            "E": self.E.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolynomialZonotope":
        n = int(d["n"]) if "n" in d else len(d["c"])
        h = int(d["h"]) if "h" in d else (len(d["G"][0]) if n and d["G"] else 0)
        q = int(d["q"]) if "q" in d else (len(d["GI"][0]) if n and d["GI"] else 0)
        p = int(d["p"]) if "p" in d else len(d["E"])
        G = np.array(d["G"], dtype=float).reshape(n, h)
        GI = np.array(d["GI"], dtype=float).reshape(n, q)
        E = np.array(d["E"], dtype=float).reshape(p, h)
        return cls(d["c"], G, GI, E)

    def __repr__(self):
        return f"PolynomialZonotope(n={self.dim}, h={self.h}, q={self.q}, p={self.p})"


@dataclass(frozen=True)
class Zonotope:
    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        if self.generators.shape[0] != self.center.shape[0]:
            raise ValueError("generator rows do not match center length")

    def interval(self) -> Interval:
        r = np.sum(np.abs(self.generators), axis=1)
        return Interval(self.center - r, self.center + r)


@dataclass(frozen=True)
class FactorAssignment:
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        a = np.atleast_1d(np.array(self.alpha, dtype=float))
        b = np.atleast_1d(np.array(self.beta, dtype=float))
        if np.any(np.abs(a) > 1) or np.any(np.abs(b) > 1):
            raise ValueError("factor values must lie in [-1, 1]")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


def new_pz(c, G=None, GI=None, E=None) -> PolynomialZonotope:
    return PolynomialZonotope(c, G, GI, E)


# ---------------------------------------------------------------------------
# evaluation


def monomials(E: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """``prod_k alpha_k ** E[k, i]`` for a batch of assignments.

    ``alpha`` has shape (N, p); the result has shape (N, h).
    """
    N = alpha.shape[0]
    p, h = E.shape
    out = np.ones((N, h))
    for k in range(p):
        row = E[k]
        if not row.any():
            continue
        out *= alpha[:, k:k + 1] ** row[None, :]
    return out


def _batch(v, k: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if k == 0:
        return v.reshape(v.shape[0] if v.ndim == 2 else 1, 0) if v.size == 0 else v.reshape(-1, 0)
    return v.reshape(-1, k)


def evaluate_batch(pz: PolynomialZonotope, alpha, beta) -> np.ndarray:
    """Evaluate the defining polynomial for N assignments at once."""
    alpha = _batch(alpha, pz.p)
    beta = _batch(beta, pz.q)
    if alpha.shape[0] != beta.shape[0]:
        if pz.p == 0:
            alpha = np.zeros((beta.shape[0], 0))
        elif pz.q == 0:
            beta = np.zeros((alpha.shape[0], 0))
        else:
            raise ValueError("alpha and beta batch sizes differ")
    return pz.c[None, :] + monomials(pz.E, alpha) @ pz.G.T + beta @ pz.GI.T


def evaluate(pz: PolynomialZonotope, fa: FactorAssignment) -> np.ndarray:
    if fa.alpha.shape[0] != pz.p or fa.beta.shape[0] != pz.q:
        raise ValueError(
            f"assignment sizes ({fa.alpha.shape[0]}, {fa.beta.shape[0]}) "
            f"do not match p={pz.p}, q={pz.q}"
        )
    return evaluate_batch(pz, fa.alpha[None, :], fa.beta[None, :])[0]


def sample_factors(pz: PolynomialZonotope, N: int, rng: np.random.Generator,
                   vertex_fraction: float = 0.25):
    """Random assignments, a fraction of them snapped to the unit-box corners."""
    alpha = rng.uniform(-1, 1, (N, pz.p))
    beta = rng.uniform(-1, 1, (N, pz.q))
    k = int(N * vertex_fraction)
    if k:
        alpha[:k] = np.sign(alpha[:k])
        beta[:k] = np.sign(beta[:k])
    return alpha, beta


# ---------------------------------------------------------------------------
# basic set operations


def affine_map(A, pz: PolynomialZonotope, b=None) -> PolynomialZonotope:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != pz.dim:
        raise ValueError(f"matrix has {A.shape[1]} columns, set has dimension {pz.dim}")
    b = np.zeros(A.shape[0]) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    if b.shape != (A.shape[0],):
        raise ValueError("offset length does not match matrix rows")
    return PolynomialZonotope(A @ pz.c + b, A @ pz.G, A @ pz.GI, pz.E)


def minkowski_sum_interval(pz: PolynomialZonotope, box: Interval) -> PolynomialZonotope:
    if box.dim != pz.dim:
        raise ValueError("interval dimension does not match set dimension")
    r = box.radius
    nz = np.flatnonzero(r > 0)
    GI = np.hstack([pz.GI, np.diag(r)[:, nz]])
    return PolynomialZonotope(pz.c + box.center, pz.G, GI, pz.E)


def cartesian_product_dep(pz1: PolynomialZonotope, pz2: PolynomialZonotope,
                          shared_independent: int = 0) -> PolynomialZonotope:
    """Dependency-preserving Cartesian product of two sets over the same
    dependent factors.

    Columns of ``pz2`` whose exponent vector equals a column of ``pz1`` are
    aligned with it; the rest are appended. The first ``shared_independent``
    independent generators of ``pz2`` are taken to use the same factors as the
    first ones of ``pz1``.
    """
    if pz1.p != pz2.p:
        raise ValueError(f"factor counts differ: {pz1.p} vs {pz2.p}")
    if shared_independent > min(pz1.q, pz2.q):
        raise ValueError("shared independent block larger than available generators")
    n1, n2 = pz1.dim, pz2.dim
    index = {tuple(col): i for i, col in enumerate(pz1.E.T)}
    G2 = np.zeros((n2, pz1.h))
    extra = []
    for j, col in enumerate(pz2.E.T):
        i = index.get(tuple(col))
        if i is None:
            extra.append(j)
        else:
            G2[:, i] += pz2.G[:, j]
    G_hat = pz2.G[:, extra]
    E = np.hstack([pz1.E, pz2.E[:, extra]])
    G = np.block([
        [pz1.G, np.zeros((n1, len(extra)))],
        [G2, G_hat],
    ])
    s = shared_independent
    GI = np.block([
        [pz1.GI, np.zeros((n1, pz2.q - s))],
        [np.hstack([pz2.GI[:, :s], np.zeros((n2, pz1.q - s))]), pz2.GI[:, s:]],
    ])
    return PolynomialZonotope(np.concatenate([pz1.c, pz2.c]), G, GI, E)


def even_columns(E: np.ndarray) -> np.ndarray:
    """Mask of exponent columns whose entries are all even."""
    return np.prod(1 - np.mod(E, 2), axis=0).astype(bool)


def interval_enclosure(pz: PolynomialZonotope) -> Interval:
    H = even_columns(pz.E)
    GH = pz.G[:, H]
    g1 = 0.5 * GH.sum(axis=1)
    g2 = 0.5 * np.abs(GH).sum(axis=1)
    g3 = np.abs(pz.G[:, ~H]).sum(axis=1)
    g4 = np.abs(pz.GI).sum(axis=1)
    rad = g2 + g3 + g4
    return Interval(pz.c + g1 - rad, pz.c + g1 + rad)


def zonotope_enclosure(pz: PolynomialZonotope) -> Zonotope:
    H = even_columns(pz.E)
    center = pz.c + 0.5 * pz.G[:, H].sum(axis=1)
    gens = np.hstack([0.5 * pz.G[:, H], pz.G[:, ~H], pz.GI])
    return Zonotope(center, gens)


# ---------------------------------------------------------------------------
# quadratic map


@dataclass(frozen=True)
class QuadLayout:
    """Column bookkeeping for one application of the quadratic map.

    ``dep_keep`` / ``ind_keep`` select the columns that survived zero-column
    dropping from the full literal layout, so a witness computed on the full
    layout can be restricted to the stored set.
    """
    h: int
    q: int
    E: np.ndarray
    dep_keep: np.ndarray
    ind_keep: np.ndarray


def _quad_full(c, G, GI, E, a1, a2, a3):
    """Row-wise quadratic map on the literal (undropped) column layout.

    All arguments describing coefficients are vectors with one entry per row,
    so stacking rows of a layer reuses one exponent matrix.
    """
    n, h = G.shape
    q = GI.shape[1]
    s = 2.0 * a1 * c + a2
    cq = a1 * c ** 2 + a2 * c + a3 + 0.5 * a1 * np.sum(GI ** 2, axis=1)

    iu, ju = np.triu_indices(h, k=1)
    G_hat = np.hstack([G ** 2, 2.0 * G[:, iu] * G[:, ju]])
    E_hat = np.hstack([2 * E, E[:, iu] + E[:, ju]])
    Gq = np.hstack([s[:, None] * G, a1[:, None] * G_hat])
    Eq = np.hstack([E, E_hat])

    G_bar = (G[:, :, None] * GI[:, None, :]).reshape(n, h * q)
    iq, jq = np.triu_indices(q, k=1)
    G_check = np.hstack([0.5 * GI ** 2, 2.0 * GI[:, iq] * GI[:, jq]])
    GIq = np.hstack([s[:, None] * GI, 2.0 * a1[:, None] * G_bar, a1[:, None] * G_check])
    return cq, Gq, GIq, Eq


def quadratic_map_rows(pz: PolynomialZonotope, a1, a2, a3, drop_zeros: bool = True):
    """Apply ``g_j(x) = a1_j x^2 + a2_j x + a3_j`` to every row ``j`` of ``pz``.

    Returns the image enclosure and its :class:`QuadLayout`.
    """
    n = pz.dim
    a1, a2, a3 = (np.broadcast_to(np.asarray(a, dtype=float), (n,)) for a in (a1, a2, a3))
    cq, Gq, GIq, Eq = _quad_full(pz.c, pz.G, pz.GI, pz.E, a1, a2, a3)
    if drop_zeros:
        dep_keep = np.flatnonzero(np.any(Gq != 0, axis=0))
        ind_keep = np.flatnonzero(np.any(GIq != 0, axis=0))
    else:
        dep_keep = np.arange(Gq.shape[1])
        ind_keep = np.arange(GIq.shape[1])
    out = PolynomialZonotope(cq, Gq[:, dep_keep], GIq[:, ind_keep], Eq[:, dep_keep])
    return out, QuadLayout(pz.h, pz.q, pz.E, dep_keep, ind_keep)


def quadratic_map(pz: PolynomialZonotope, a1: float, a2: float, a3: float,
                  drop_zeros: bool = True) -> PolynomialZonotope:
    """Enclose ``{a1 x^2 + a2 x + a3 | x in pz}`` for a one-dimensional set."""
    if pz.dim != 1:
        raise ValueError(f"quadratic map needs a one-dimensional set, got n={pz.dim}")
    return quadratic_map_rows(pz, a1, a2, a3, drop_zeros)[0]


def quad_witness_beta(E: np.ndarray, q: int, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Independent factors of the quadratic-map image for a batch of inputs.

    Order: original beta, then beta_j * alpha^E[:, i] (i-major), then
    2 beta_i^2 - 1, then beta_i beta_j for i < j.
    """
    N = beta.shape[0]
    m = monomials(E, alpha)
    cross = (m[:, :, None] * beta[:, None, :]).reshape(N, -1)
    iq, jq = np.triu_indices(q, k=1)
    return np.hstack([beta, cross, 2.0 * beta ** 2 - 1.0, beta[:, iq] * beta[:, jq]])


def quadratic_map_witness(pz: PolynomialZonotope, fa: FactorAssignment) -> FactorAssignment:
    """Factor assignment under which the literal (undropped) quadratic-map
    image of ``pz`` evaluates to ``g(evaluate(pz, fa))``."""
    if fa.alpha.shape[0] != pz.p or fa.beta.shape[0] != pz.q:
        raise ValueError("assignment does not match the set")
    beta = quad_witness_beta(pz.E, pz.q, fa.alpha[None, :], fa.beta[None, :])[0]
    return FactorAssignment(fa.alpha, np.clip(beta, -1.0, 1.0))


# ---------------------------------------------------------------------------
# simplification


@dataclass(frozen=True)
class CompactRecord:
    ind_keep: np.ndarray


def compact_with_record(pz: PolynomialZonotope):
    c = pz.c.copy()
    const = ~np.any(pz.E != 0, axis=0) if pz.h else np.zeros(0, bool)
    c += pz.G[:, const].sum(axis=1)
    G = pz.G[:, ~const]
    E = pz.E[:, ~const]

    order: dict[tuple, int] = {}
    cols = []
    for i, col in enumerate(E.T):
        key = tuple(col)
        if key in order:
            cols[order[key]][1] += G[:, i]
        else:
            order[key] = len(cols)
            cols.append([col, G[:, i].copy()])
    cols = [(e, g) for e, g in cols if np.any(g != 0)]
    if cols:
        E_new = np.stack([e for e, _ in cols], axis=1)
        G_new = np.stack([g for _, g in cols], axis=1)
    else:
        E_new = np.zeros((pz.p, 0), dtype=np.int64)
        G_new = np.zeros((pz.dim, 0))
    ind_keep = np.flatnonzero(np.any(pz.GI != 0, axis=0))
    return PolynomialZonotope(c, G_new, pz.GI[:, ind_keep], E_new), CompactRecord(ind_keep)


def compact(pz: PolynomialZonotope) -> PolynomialZonotope:
    """Exact simplification: merge equal exponent columns, fold constant
    columns into the center, drop zero generators. Factor rows are kept."""
    return compact_with_record(pz)[0]


@dataclass(frozen=True)
class ReductionRecord:
    dep_boxed: np.ndarray
    ind_boxed: np.ndarray
    ind_kept: np.ndarray
    G_boxed: np.ndarray
    E_boxed: np.ndarray
    GI_boxed: np.ndarray
    shift: np.ndarray
    rad: np.ndarray
    rad_dims: np.ndarray


def reduce_order_with_record(pz: PolynomialZonotope, rho: float):
    if rho < 1:
        raise ValueError("reduction order must be at least 1")
    n, h, q = pz.dim, pz.h, pz.q
    if n == 0 or h + q <= rho * n:
        return pz, None
    keep = max(int(np.floor(rho * n)) - n, 0)
    norms = np.concatenate([
        np.max(np.abs(pz.G), axis=0) if h else np.zeros(0),
        np.max(np.abs(pz.GI), axis=0) if q else np.zeros(0),
    ])
    ranked = np.argsort(norms, kind="stable")
    boxed = np.sort(ranked[: h + q - keep])
    dep_boxed = boxed[boxed < h]
    ind_boxed = boxed[boxed >= h] - h
    dep_kept = np.setdiff1d(np.arange(h), dep_boxed)
    ind_kept = np.setdiff1d(np.arange(q), ind_boxed)

    Gb = pz.G[:, dep_boxed]
    Eb = pz.E[:, dep_boxed]
    H = even_columns(Eb)
    shift = 0.5 * Gb[:, H].sum(axis=1)
    rad = (0.5 * np.abs(Gb[:, H]).sum(axis=1) + np.abs(Gb[:, ~H]).sum(axis=1)
           + np.abs(pz.GI[:, ind_boxed]).sum(axis=1))
    rad_dims = np.flatnonzero(rad > 0)
    GI = np.hstack([pz.GI[:, ind_kept], np.diag(rad)[:, rad_dims]])
    out = PolynomialZonotope(pz.c + shift, pz.G[:, dep_kept], GI, pz.E[:, dep_kept])
    rec = ReductionRecord(dep_boxed, ind_boxed, ind_kept, Gb, Eb,
                          pz.GI[:, ind_boxed], shift, rad, rad_dims)
    return out, rec


def reduce_order(pz: PolynomialZonotope, rho: float) -> PolynomialZonotope:
    """Cap ``(h + q) / n`` at ``rho`` by boxing the smallest generators.

    Columns (dependent then independent) are ranked by infinity norm; the
    smallest are replaced by their interval hull, appended as axis-aligned
    independent generators. Exponent rows are never removed.
    """
    return reduce_order_with_record(pz, rho)[0]


def replay_compact(rec: CompactRecord, alpha, beta):
    return alpha, beta[:, rec.ind_keep]


def replay_reduction(rec: ReductionRecord | None, alpha, beta):
    if rec is None:
        return alpha, beta
    s = monomials(rec.E_boxed, alpha) @ rec.G_boxed.T + beta[:, rec.ind_boxed] @ rec.GI_boxed.T
    d = rec.rad_dims
    new = (s[:, d] - rec.shift[d]) / rec.rad[d]
    return alpha, np.hstack([beta[:, rec.ind_kept], np.clip(new, -1.0, 1.0)])


def rebase(pz: PolynomialZonotope) -> PolynomialZonotope:
    """Turn independent generators into dependent ones with fresh factors.

    Unused factor rows are dropped first, so the result has
    ``p = (#used rows) + q`` and no independent generators.
    """
    pz = compact(pz)
    used = np.any(pz.E != 0, axis=1)
    E = pz.E[used]
    p0, q = E.shape[0], pz.q
    E = np.block([
        [E, np.zeros((p0, q), dtype=np.int64)],
        [np.zeros((q, pz.h), dtype=np.int64), np.eye(q, dtype=np.int64)],
    ])
    return PolynomialZonotope(pz.c, np.hstack([pz.G, pz.GI]), None, E)
