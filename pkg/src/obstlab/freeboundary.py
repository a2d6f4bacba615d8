"""Free-boundary extraction and C^1 graph diagnostics.

The zero-set boundary and the contact-set boundary are recovered as
marching-squares polylines over the partition mask, with sub-grid placement
along each crossed edge.  Because the solution leaves its coincidence sets
quadratically, sqrt(u) (resp. sqrt(psi - u)) is linear in the distance to
the interface; two nodes on the positive side of a crossed edge therefore
locate the interface exactly for clean quadratic growth, where linear
interpolation of u itself would bias the position by O(h).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .grid import ScalarField
from .solver import CONTACT, ZERO, PartitionMask

__all__ = [
    "FreeBoundaryCurve",
    "GraphFit",
    "NotAGraphError",
    "GAMMA",
    "GAMMA_PSI",
    "extract",
    "normals",
    "lipschitz_fit",
    "c1_diagnostic",
    "gamma_d_events",
]

GAMMA = "gamma"
GAMMA_PSI = "gamma_psi"


class NotAGraphError(ValueError):
    """Curve points are not a single-valued graph over the requested axis."""


@dataclass(frozen=True)
class FreeBoundaryCurve:
    """Ordered sub-grid polyline with per-point unit normals.

    Consecutive points are never more than 2h apart (they come from
    adjacent cells); ``closed`` marks loops.
    """

    which: str
    points: NDArray[np.float64]
    normals: NDArray[np.float64]
    closed: bool
    h: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        nrm = np.asarray(self.normals, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or nrm.shape != pts.shape:
            raise ValueError("points and normals must be (m, 2) arrays")
        if len(pts) >= 2:
            gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            if np.max(gaps) > 2.0 * self.h + 1e-12:
                raise ValueError(f"consecutive curve points {np.max(gaps):.3g} > 2h apart")
        lens = np.linalg.norm(nrm, axis=1)
        if np.any(np.abs(lens - 1.0) > 1e-8):
            raise ValueError("normals must be unit vectors")
        pts.setflags(write=False)
        nrm.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class GraphFit:
    center: tuple[float, float]
    direction: tuple[float, float]
    radius: float
    lipschitz_constant: float
    residual: float
    n_points: int

    def __post_init__(self):
        if not np.isfinite(self.lipschitz_constant) or self.lipschitz_constant < 0:
            raise ValueError("lipschitz constant must be finite and nonnegative")
        if self.n_points < 5:
            raise ValueError("graph fit needs at least 5 curve points")


def _sub_grid_offset(s_pos: float, s_next: float | None) -> float:
    """Offset fraction in [0, 1] of the interface from the zero-side node.

    s values are sqrt-of-field samples at 1 and 2 steps into the positive
    side; sqrt growth is linear in distance, so the two samples extrapolate
    to the root.  With only one usable sample the midpoint is returned.
    """
    if s_next is None or s_next <= s_pos or s_pos < 0:
        return 0.5
    rho = s_pos / s_next
    if rho >= 0.5:
        return 0.0
    t = (1.0 - 2.0 * rho) / (1.0 - rho)
    return float(np.clip(t, 0.0, 1.0))


def _crossing_points(inside: NDArray, sval: NDArray, grid) -> dict:
    """Sub-grid interface point for every edge whose endpoints disagree."""
    h = grid.h
    lo = grid.lo
    nx, ny = inside.shape
    pts: dict[tuple, NDArray] = {}
    for axis in (0, 1):
        a = inside if axis == 0 else inside.T
        s = sval if axis == 0 else sval.T
        change = a[:-1, :] != a[1:, :]
        for i, j in np.argwhere(change):
            # nodes n0 = (i, j), n1 = (i+1, j) along `axis`; orient toward
            # the side where the sqrt-field grows (it vanishes at the
            # interface and is linear in the distance beyond it)
            if s[i + 1, j] >= s[i, j]:
                i_zero, i_pos, step = i, i + 1, 1
            else:
                i_zero, i_pos, step = i + 1, i, -1
            i_next = i_pos + step
            s_next = s[i_next, j] if 0 <= i_next < s.shape[0] else None
            t = _sub_grid_offset(float(s[i_pos, j]), None if s_next is None else float(s_next))
            # interface sits t*h from the zero node toward the positive node
            coord_along = (i_zero + step * t) * h
            if axis == 0:
                p = np.array([lo[0] + coord_along, lo[1] + j * h])
            else:
                p = np.array([lo[0] + j * h, lo[1] + coord_along])
            pts[(axis, i, j)] = p
    return pts


_SEG_TABLE = {
    # 4-bit corner code (bl=1, br=2, tr=4, tl=8) -> (edge, edge) segments;
    # edges: 0 bottom, 1 right, 2 top, 3 left
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(0, 2)],
    11: [(1, 2)], 12: [(1, 3)], 13: [(0, 1)], 14: [(3, 0)],
}


def _cell_segments(code: int) -> list[tuple[int, int]]:
    if code in (0, 15):
        return []
    # saddles: resolve with the isolated-corners convention (deterministic)
    if code == 5:
        return [(3, 0), (1, 2)]
    if code == 10:
        return [(0, 1), (2, 3)]
    return _SEG_TABLE[code]


def _edge_key(axis_cell: tuple[int, int], edge: int) -> tuple:
    i, j = axis_cell
    if edge == 0:
        return (0, i, j)
    if edge == 2:
        return (0, i, j + 1)
    if edge == 3:
        return (1, j, i)
    return (1, j, i + 1)


def _chain(segments: list[tuple], per_point: dict) -> list[tuple[list, bool]]:
    """Order segments into polylines; returns (point-key list, closed)."""
    adj: dict[tuple, list[tuple]] = {}
    for a, b in segments:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    unused = {tuple(sorted((a, b), key=repr)) for a, b in segments}

    def walk(start):
        chain = [start]
        while True:
            cur = chain[-1]
            nxt = None
            for cand in adj.get(cur, []):
                key = tuple(sorted((cur, cand), key=repr))
                if key in unused:
                    unused.discard(key)
                    nxt = cand
                    break
            if nxt is None:
                return chain
            chain.append(nxt)

    curves = []
    endpoints = [k for k, v in adj.items() if len(v) == 1]
    for start in sorted(endpoints, key=repr):
        if any(tuple(sorted((start, c), key=repr)) in unused for c in adj[start]):
            chain = walk(start)
            curves.append((chain, False))
    # remaining segments form loops: the walk returns to its start
    while unused:
        start = sorted(unused, key=repr)[0][0]
        chain = walk(start)
        if len(chain) > 2 and chain[0] == chain[-1]:
            curves.append((chain[:-1], True))
        else:
            curves.append((chain, False))
    return curves


def extract(
    u: ScalarField,
    mask: PartitionMask,
    which: str = GAMMA,
    psi: ScalarField | None = None,
    normal_window: int = 4,
    min_points: int = 3,
) -> list[FreeBoundaryCurve]:
    """Marching-squares curves of the zero-set boundary (GAMMA) or the
    contact-set boundary (GAMMA_PSI), with sqrt-based sub-grid placement.

    GAMMA_PSI needs the obstacle field to form sqrt(psi - u).  Curves are
    ordered by adjacency; an empty region yields an empty list.
    """
    g = u.grid
    if g.n != 2:
        raise ValueError("free-boundary extraction is planar (n = 2)")
    lab = mask.labels
    if which == GAMMA:
        inside = lab != ZERO
        sval = np.sqrt(np.maximum(u.values, 0.0))
    elif which == GAMMA_PSI:
        if psi is None:
            raise ValueError("extracting the contact boundary requires the obstacle field")
        # {u = psi} includes the squeeze region where both vanish, so the
        # indicator comes from the gap field, not the CONTACT label (which
        # deliberately excludes the squeeze)
        gap = psi.values - u.values
        tight = 1e-9 * max(1.0, float(np.max(psi.values)))
        inside = gap > tight
        sval = np.sqrt(np.maximum(gap, 0.0))
    else:
        raise ValueError(f"unknown boundary kind {which!r}")
    # the outermost ring is outside the partition: copy the first interior
    # ring outward so no spurious interface hugs the box
    inside = inside.copy()
    inside[0, :] = inside[1, :]
    inside[-1, :] = inside[-2, :]
    inside[:, 0] = inside[:, 1]
    inside[:, -1] = inside[:, -2]
    if not inside.any() or inside.all():
        return []

    pts = _crossing_points(inside, sval, g)
    segments = []
    nx, ny = g.dims
    for i in range(nx - 1):
        for j in range(ny - 1):
            code = (
                (1 if inside[i, j] else 0)
                | (2 if inside[i + 1, j] else 0)
                | (4 if inside[i + 1, j + 1] else 0)
                | (8 if inside[i, j + 1] else 0)
            )
            if code in (0, 15):
                continue
            for e1, e2 in _cell_segments(code):
                k1 = _edge_key((i, j), e1)
                k2 = _edge_key((i, j), e2)
                if k1 in pts and k2 in pts:
                    segments.append((k1, k2))
    curves = []
    for keys, closed in _chain(segments, pts):
        if len(keys) < min_points:
            continue
        P = np.array([pts[k] for k in keys])
        N = _pca_normals(P, normal_window, closed)
        curves.append(FreeBoundaryCurve(which, P, N, closed, g.h))
    curves.sort(key=lambda c: (-len(c.points), float(c.points[0][0]), float(c.points[0][1])))
    return curves


def _pca_normals(P: NDArray, window: int, closed: bool) -> NDArray:
    m = len(P)
    out = np.zeros_like(P)
    for i in range(m):
        if closed:
            idx = [(i + k) % m for k in range(-window, window + 1)]
        else:
            lo = max(0, i - window)
            hi = min(m, i + window + 1)
            idx = list(range(lo, hi))
        if len(idx) < 3:
            raise ValueError(f"normal window too small: {len(idx)} points (need >= 3)")
        Q = P[idx] - P[idx].mean(axis=0)
        _, _, vt = np.linalg.svd(Q, full_matrices=False)
        n = vt[-1]
        out[i] = n / np.linalg.norm(n)
    # consistent orientation along the chain; anchor at the left normal of
    # the first tangent
    t0 = P[min(1, m - 1)] - P[0]
    anchor = np.array([-t0[1], t0[0]])
    if np.linalg.norm(anchor) > 0 and out[0] @ anchor < 0:
        out[0] = -out[0]
    for i in range(1, m):
        if out[i] @ out[i - 1] < 0:
            out[i] = -out[i]
    return out


def normals(curve: FreeBoundaryCurve, window: int) -> NDArray[np.float64]:
    """Per-point unit normals from a total-least-squares line fit over
    +-window neighbors; fewer than 3 points in a window is an error."""
    return _pca_normals(curve.points, window, curve.closed)


def lipschitz_fit(curve: FreeBoundaryCurve, x0, e, r: float) -> GraphFit:
    """Treat the curve inside B_r(x0) as a graph with value axis e.

    Rejects inputs where two points share an abscissa (within h/2) but
    differ in value by more than 2h.  The Lipschitz constant is the max
    pairwise slope; the residual is the max deviation from the best affine
    fit.
    """
    x0 = np.asarray(x0, dtype=float)
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    perp = np.array([-e[1], e[0]])
    P = curve.points[np.linalg.norm(curve.points - x0, axis=1) <= r]
    if len(P) < 5:
        raise ValueError(f"need >= 5 curve points in B_{r}({x0}), found {len(P)}")
    rel = P - x0
    val = rel @ e
    absc = rel @ perp
    h = curve.h
    order = np.argsort(absc)
    val, absc = val[order], absc[order]
    da = absc[:, None] - absc[None, :]
    dv = val[:, None] - val[None, :]
    close_abs = np.abs(da) < 0.5 * h
    if np.any(close_abs & (np.abs(dv) > 2.0 * h)):
        raise NotAGraphError("two curve points share an abscissa but differ in value")
    ok = np.abs(da) >= 0.5 * h
    lip = float(np.max(np.abs(dv[ok]) / np.abs(da[ok]))) if np.any(ok) else 0.0
    A = np.stack([np.ones_like(absc), absc], axis=1)
    coef, *_ = np.linalg.lstsq(A, val, rcond=None)
    residual = float(np.max(np.abs(val - A @ coef)))
    return GraphFit(
        center=(float(x0[0]), float(x0[1])),
        direction=(float(e[0]), float(e[1])),
        radius=float(r),
        lipschitz_constant=lip,
        residual=residual,
        n_points=int(len(P)),
    )


def c1_diagnostic(
    curve: FreeBoundaryCurve, x0, radii: Sequence[float], window: int | None = None
) -> list[tuple[float, float]]:
    """(r, normal oscillation over B_r(x0)) for decreasing radii.

    Oscillation is the max pairwise angle between normals of in-ball curve
    points; a C^1 interface drives it to zero with r (down to the grid
    floor), while a corner pins it at the corner angle.  Pass ``window`` to
    refit normals over a wider stencil than the curve carries (sub-grid
    jitter on solved fields calls for ~8).
    """
    x0 = np.asarray(x0, dtype=float)
    N_all = curve.normals if window is None else normals(curve, window)
    out = []
    for r in sorted(radii, reverse=True):
        sel = np.linalg.norm(curve.points - x0, axis=1) <= r
        N = N_all[sel]
        if len(N) < 2:
            out.append((float(r), 0.0))
            continue
        gram = np.clip(N @ N.T, -1.0, 1.0)
        out.append((float(r), float(np.max(np.arccos(gram)))))
    return out


def gamma_d_events(
    gamma_curves: Sequence[FreeBoundaryCurve],
    gamma_psi_curves: Sequence[FreeBoundaryCurve],
    h: float,
) -> list[dict]:
    """Points where the two boundaries approach within 2h of each other."""
    events = []
    for gc in gamma_curves:
        for pc in gamma_psi_curves:
            d = np.linalg.norm(gc.points[:, None, :] - pc.points[None, :, :], axis=-1)
            hits = np.argwhere(d <= 2.0 * h)
            for i, j in hits:
                events.append(
                    {
                        "gamma_point": [float(v) for v in gc.points[i]],
                        "gamma_psi_point": [float(v) for v in pc.points[j]],
                        "distance": float(d[i, j]),
                    }
                )
    return events
