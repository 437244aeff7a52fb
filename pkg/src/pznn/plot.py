"""SVG rendering of 2-D projections of polynomial zonotopes.

A set is drawn as a point cloud obtained by evaluating it on a dense grid
over its two most influential dependent factors (the remaining dependent
factors are drawn at random, independent factors at +-1), overlaid with its
interval hull. Output is plain SVG 1.1 and deterministic for a given seed.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .interval import Interval
from .pz import PolynomialZonotope, affine_map, evaluate_batch, interval_enclosure

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def project(pz: PolynomialZonotope, dims) -> PolynomialZonotope:
    i, j = dims
    if not (0 <= i < pz.dim and 0 <= j < pz.dim):
        raise ValueError(f"dimensions {dims} out of range for a {pz.dim}-dimensional set")
    P = np.zeros((2, pz.dim))
    P[0, i] = P[1, j] = 1.0
    return affine_map(P, pz)


def sample_cloud(pz: PolynomialZonotope, grid: int = 200, rng=None) -> np.ndarray:
    """Points of a 2-D set on a ``grid x grid`` factor grid."""
    rng = rng or np.random.default_rng(0)
    if pz.p == 0 and pz.q == 0:
        return pz.c[None, :].copy()
    weight = np.array([np.abs(pz.G[:, pz.E[k] > 0]).sum() for k in range(pz.p)])
    axes = list(np.argsort(-weight, kind="stable")[: min(2, pz.p)])
    N = grid ** len(axes) if axes else grid
    alpha = rng.uniform(-1.0, 1.0, (N, pz.p))
    if axes:
        ticks = np.linspace(-1.0, 1.0, grid)
        mesh = np.meshgrid(*([ticks] * len(axes)), indexing="ij")
        for a, m in zip(axes, mesh):
            alpha[:, a] = m.ravel()
    beta = rng.choice([-1.0, 1.0], (N, pz.q))
    return evaluate_batch(pz, alpha, beta)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(clouds, boxes, title: str = "", size: int = 480, labels=("x", "y")) -> str:
    """SVG document with one point cloud and one rectangle per set."""
    pad = 48
    lo = np.array([np.inf, np.inf])
    hi = -lo
    for b in boxes:
        lo, hi = np.minimum(lo, b.l), np.maximum(hi, b.u)
    for pts in clouds:
        if len(pts):
            lo, hi = np.minimum(lo, pts.min(0)), np.maximum(hi, pts.max(0))
    if not np.all(np.isfinite(lo)):
        lo, hi = np.zeros(2), np.ones(2)
    span = np.maximum(hi - lo, 1e-9 * np.maximum(1.0, np.abs(lo)))
    lo, hi = lo - 0.05 * span, hi + 0.05 * span
    span = hi - lo
    inner = size - 2 * pad

    def px(p):
        p = np.atleast_2d(p)
        x = pad + (p[:, 0] - lo[0]) / span[0] * inner
        y = size - pad - (p[:, 1] - lo[1]) / span[1] * inner
        return x, y

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<rect x="{pad}" y="{pad}" width="{inner}" height="{inner}" fill="none" stroke="#999"/>',
    ]
    if title:
        out.append(f'<text x="{size / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for k, pts in enumerate(clouds):
        colour = PALETTE[k % len(PALETTE)]
        x, y = px(pts)
        cells = np.unique(np.stack([np.round(x), np.round(y)], axis=1), axis=0)
        out.append(f'<g fill="{colour}" fill-opacity="0.5" stroke="none">')
        out.extend(f'<circle cx="{a:.0f}" cy="{b:.0f}" r="0.9"/>' for a, b in cells)
        out.append("</g>")
    for k, b in enumerate(boxes):
        colour = PALETTE[k % len(PALETTE)]
        (x0, x1), (y1, y0) = px(np.array([b.l, b.u]))
        out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" height="{_fmt(y1 - y0)}" '
                   f'fill="none" stroke="{colour}" stroke-width="1"/>')
    fmt = lambda v: f"{v:.4g}"  # noqa: E731
    out += [
        f'<text x="{pad}" y="{size - pad + 16}" font-size="11">{fmt(lo[0])}</text>',
        f'<text x="{size - pad}" y="{size - pad + 16}" font-size="11" text-anchor="end">{fmt(hi[0])}</text>',
        f'<text x="{pad - 4}" y="{size - pad}" font-size="11" text-anchor="end">{fmt(lo[1])}</text>',
        f'<text x="{pad - 4}" y="{pad + 10}" font-size="11" text-anchor="end">{fmt(hi[1])}</text>',
        f'<text x="{size / 2:.1f}" y="{size - 12}" font-size="12" text-anchor="middle">{escape(labels[0])}</text>',
        f'<text x="14" y="{size / 2:.1f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {size / 2:.1f})">{escape(labels[1])}</text>',
        "</svg>",
    ]
    return "\n".join(out) + "\n"


def plot_sets(sets, dims=(0, 1), grid: int = 200, seed: int = 0, title: str = "") -> str:
    rng = np.random.default_rng(seed)
    clouds, boxes = [], []
    for s in sets:
        if isinstance(s, Interval):
            s = PolynomialZonotope.from_interval(s)
        proj = project(s, dims)
        clouds.append(sample_cloud(proj, grid, rng))
        boxes.append(interval_enclosure(proj))
    labels = (f"dim {dims[0]}", f"dim {dims[1]}")
    return render_svg(clouds, boxes, title, labels=labels)
