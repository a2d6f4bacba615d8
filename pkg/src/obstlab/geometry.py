"""Planar convex hulls and minimal width (rotating calipers)."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

__all__ = ["convex_hull", "min_width", "min_width_bruteforce"]


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: NDArray) -> NDArray[np.float64]:
    """Monotone-chain convex hull, counterclockwise, no repeated endpoint.

    Collinear boundary points are dropped.  Degenerate inputs (empty, a
    single point, all collinear) return what survives: 0, 1 or 2 points.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) == 2 and np.allclose(hull[0], hull[1]):
        hull = hull[:1]
    return hull


def min_width(points: NDArray) -> float:
    """Least distance between two parallel lines enclosing the points.

    Rotating calipers over antipodal edge-vertex pairs of the hull: for
    each hull edge, the farthest vertex advances monotonically, and the
    width is the minimum over edges of that edge-vertex distance.
    """
    hull = convex_hull(points)
    m = len(hull)
    if m <= 2:
        return 0.0
    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.linalg.norm(edges, axis=1)
    width = np.inf
    j = 1
    for i in range(m):
        e = edges[i]
        ln = lengths[i]
        if ln == 0.0:
            continue

        def dist(k):
            return abs(_cross(hull[i], hull[(i + 1) % m], hull[k])) / ln

        # advance the antipodal vertex while the distance keeps growing
        while dist((j + 1) % m) >= dist(j) + 1e-15:
            j = (j + 1) % m
        width = min(width, dist(j))
    return float(width)


def min_width_bruteforce(points: NDArray) -> float:
    """O(E*V) reference: for every hull edge direction, the support width."""
    hull = convex_hull(points)
    m = len(hull)
    if m <= 2:
        return 0.0
    best = np.inf
    for i in range(m):
        e = hull[(i + 1) % m] - hull[i]
        ln = np.linalg.norm(e)
        if ln == 0.0:
            continue
        n = np.array([-e[1], e[0]]) / ln
        proj = (hull - hull[i]) @ n
        best = min(best, float(proj.max() - proj.min()))
    return float(best)
