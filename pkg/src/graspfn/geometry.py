"""Planar polygon and segment primitives for the scene generator and grasp model.

Coordinates are millimeters.  A polygon is an (N, 2) float array of vertices;
counter-clockwise orientation is the convention throughout the package.
"""
from __future__ import annotations

import numpy as np


def polygon_area(verts: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise vertices."""
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def ensure_ccw(verts: np.ndarray) -> np.ndarray:
    v = np.asarray(verts, dtype=float)
    if polygon_area(v) < 0.0:
        v = v[::-1].copy()
    return v


def polygon_centroid(verts: np.ndarray) -> np.ndarray:
    """Area centroid (uniform density). Falls back to the vertex mean for
    degenerate (near zero area) polygons."""
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if abs(a) < 1e-12:
        return verts.mean(axis=0)
    cx = float(np.sum((x + xn) * cross) / (6.0 * a))
    cy = float(np.sum((y + yn) * cross) / (6.0 * a))
    return np.array([cx, cy])


def polygon_diameter(verts: np.ndarray) -> float:
    """Maximum pairwise vertex distance (the max planar dimension)."""
    d = verts[:, None, :] - verts[None, :, :]
    return float(np.sqrt((d * d).sum(axis=2).max()))


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices in CCW order."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                a, b = out[-2], out[-1]
                if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def polygon_is_simple(verts: np.ndarray) -> bool:
    """True when no two non-adjacent edges intersect and no edge degenerates."""
    v = np.asarray(verts, dtype=float)
    n = len(v)
    if n < 3:
        return False
    p = v
    q = np.roll(v, -1, axis=0)
    if np.any(np.hypot(q[:, 0] - p[:, 0], q[:, 1] - p[:, 1]) < 1e-12):
        return False

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
            b[..., 1] - a[..., 1]
        ) * (c[..., 0] - a[..., 0])

    pi = p[:, None, :]
    qi = q[:, None, :]
    pj = p[None, :, :]
    qj = q[None, :, :]
    d1 = orient(pi, qi, pj)
    d2 = orient(pi, qi, qj)
    d3 = orient(pj, qj, pi)
    d4 = orient(pj, qj, qi)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)
    # collinear touching: any orientation exactly zero with overlapping boxes
    boxes_overlap = (
        (np.minimum(pi[..., 0], qi[..., 0]) <= np.maximum(pj[..., 0], qj[..., 0]))
        & (np.maximum(pi[..., 0], qi[..., 0]) >= np.minimum(pj[..., 0], qj[..., 0]))
        & (np.minimum(pi[..., 1], qi[..., 1]) <= np.maximum(pj[..., 1], qj[..., 1]))
        & (np.maximum(pi[..., 1], qi[..., 1]) >= np.minimum(pj[..., 1], qj[..., 1]))
    )
    touch = ((d1 == 0) | (d2 == 0) | (d3 == 0) | (d4 == 0)) & boxes_overlap
    idx = np.arange(n)
    adjacent = (np.abs(idx[:, None] - idx[None, :]) <= 1) | (
        np.abs(idx[:, None] - idx[None, :]) == n - 1
    )
    bad = (proper | touch) & ~adjacent
    return not bool(bad.any())


def points_in_polygon(points: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Even-odd rule point-in-polygon test, vectorized over points.

    points: (M, 2), verts: (N, 2). Returns (M,) bool.
    """
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    x0 = verts[:, 0][None, :]
    y0 = verts[:, 1][None, :]
    x1 = np.roll(verts[:, 0], -1)[None, :]
    y1 = np.roll(verts[:, 1], -1)[None, :]
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    crossings = straddle & (px < xint)
    return (crossings.sum(axis=1) % 2).astype(bool)


def point_in_polygons(px: float, py: float, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd test of one fixed point against a batch of polygons.

    xs, ys: (K, N) vertex coordinates of K polygons with shared vertex count.
    Returns (K,) bool.
    """
    x1 = np.roll(xs, -1, axis=1)
    y1 = np.roll(ys, -1, axis=1)
    straddle = (ys > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = xs + (py - ys) * (x1 - xs) / (y1 - ys)
    crossings = straddle & (px < xint)
    return (crossings.sum(axis=1) % 2).astype(bool)


def clip_segments(
    x0, y0, x1, y1, xlo=-np.inf, xhi=np.inf, ylo=-np.inf, yhi=np.inf
):
    """Liang-Barsky clip of segments against an axis-aligned box, vectorized.

    Segment arrays and bounds broadcast together. Returns (t0, t1, valid)
    where valid segments span parameters [t0, t1] of the original segment.
    """
    dx = x1 - x0
    dy = y1 - y0
    shape = np.broadcast_shapes(
        np.shape(x0), np.shape(y0), np.shape(x1), np.shape(y1),
        np.shape(xlo), np.shape(xhi), np.shape(ylo), np.shape(yhi),
    )
    t0 = np.zeros(shape)
    t1 = np.ones_like(t0)
    ok = np.ones(t0.shape, dtype=bool)

    for p, q in (
        (-dx, x0 - xlo),
        (dx, xhi - x0),
        (-dy, y0 - ylo),
        (dy, yhi - y0),
    ):
        q = np.broadcast_to(np.asarray(q, dtype=float), t0.shape)
        p = np.broadcast_to(np.asarray(p, dtype=float), t0.shape)
        finite = np.isfinite(q)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = q / p
        entering = finite & (p < 0)
        leaving = finite & (p > 0)
        parallel_out = finite & (p == 0) & (q < 0)
        t0 = np.where(entering, np.maximum(t0, t), t0)
        t1 = np.where(leaving, np.minimum(t1, t), t1)
        ok &= ~parallel_out

    ok &= t0 <= t1
    return t0, t1, ok
