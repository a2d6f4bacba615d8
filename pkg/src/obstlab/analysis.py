"""Energy and monotonicity functionals, rescalings, and blowup studies.

Everything here is 2D (the ACF weight |x|^{2-n} is then identically one and
the origin singularity never enters).  All operations are pure over
immutable fields; series are evaluated radius by radius with deterministic
ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .geometry import min_width
from .grid import (
    DomainError,
    Grid,
    QuadratureError,
    ScalarField,
    VectorField,
    ball_integral,
    gradient,
    interp,
    interp_quadratic,
    interp_vector,
    sphere_integral,
    sphere_samples,
)
from .solver import CONTACT, OPEN, UNRESOLVED, ZERO, PartitionMask, d2_sup

__all__ = [
    "FunctionalSeries",
    "BlowupStudy",
    "rescale",
    "thickness",
    "weiss",
    "weiss_series",
    "weiss_derivative_check",
    "acf",
    "acf_series",
    "nondegeneracy_check",
    "directional_check",
    "blowup_study",
    "zero_set_points",
    "VERDICT_LOW",
    "VERDICT_HIGH",
    "VERDICT_UNRESOLVED",
]

VERDICT_LOW = "HALF_SPACE_LOW"
VERDICT_HIGH = "HALF_SPACE_HIGH"
VERDICT_UNRESOLVED = "UNRESOLVED"


@dataclass(frozen=True)
class FunctionalSeries:
    """r_i -> value_i with the largest downward step recorded, since several
    of these functionals are claimed nondecreasing in r."""

    radii: NDArray[np.float64]
    values: NDArray[np.float64]
    kind: str  # WEISS | ACF | THICKNESS | HOMOGENEITY_DEFECT

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or v.shape != r.shape:
            raise ValueError("radii and values must be 1D arrays of equal length")
        if np.any(np.diff(r) <= 0) or np.any(r <= 0):
            raise ValueError("radii must be positive and strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("series values must be finite")
        r.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)

    @property
    def monotone_violation(self) -> float:
        if len(self.values) < 2:
            return 0.0
        return float(max(0.0, np.max(self.values[:-1] - self.values[1:])))

    def rows(self) -> list[tuple[float, float, float]]:
        """(r, value, running violation) rows for CSV export."""
        out = []
        worst = 0.0
        for i, (r, v) in enumerate(zip(self.radii, self.values)):
            if i > 0:
                worst = max(worst, self.values[i - 1] - v)
            out.append((float(r), float(v), max(0.0, float(worst))))
        return out


def rescale(u: ScalarField, x0, lam: float, ref: Grid) -> ScalarField:
    """(u(x0 + lam x) - u(x0)) / lam^2 evaluated on the reference grid."""
    x0 = np.asarray(x0, dtype=float)
    if lam < 4 * u.grid.h:
        raise DomainError(f"rescaling floor violated: lambda={lam} < 4h={4 * u.grid.h}")
    pts = x0 + lam * ref.nodes()
    base = interp(u, x0)
    vals = (interp(u, pts) - base) / lam**2
    return ScalarField(ref, vals)


def zero_set_points(u: ScalarField, eps: float) -> NDArray[np.float64]:
    """Nodes with |u| <= eps and |grad u| <= sqrt(eps), as coordinates."""
    g = gradient(u)
    gnorm = np.sqrt(np.sum(g.values**2, axis=-1))
    keep = (np.abs(u.values) <= eps) & (gnorm <= np.sqrt(eps))
    keep[0, :] = keep[-1, :] = False
    keep[:, 0] = keep[:, -1] = False
    idx = np.argwhere(keep)
    return u.grid.lo + u.grid.h * idx


def thickness(mask_or_points, x0, r: float, h: float | None = None) -> float:
    """Minimal width of the zero-set sample inside B_r(x0), divided by r.

    Accepts a PartitionMask (its ZERO nodes are used) or a raw (m, 2) point
    array.  An empty intersection has thickness 0.
    """
    x0 = np.asarray(x0, dtype=float)
    if isinstance(mask_or_points, PartitionMask):
        if mask_or_points.grid.n != 2:
            raise ValueError("thickness is a planar functional (n = 2)")
        h = mask_or_points.grid.h
        pts = mask_or_points.points_of(ZERO)
    else:
        pts = np.asarray(mask_or_points, dtype=float).reshape(-1, 2)
    if h is not None and r < 4 * h:
        raise QuadratureError(f"thickness radius r={r} below reliability floor 4h={4 * h}")
    if len(pts) == 0:
        return 0.0
    inside = pts[np.linalg.norm(pts - x0, axis=1) <= r]
    if len(inside) == 0:
        return 0.0
    return min_width(inside) / r


def _coded_laplacian(mask: PartitionMask, a: float, f) -> NDArray[np.float64]:
    """Region-coded Delta u: a on contact nodes, f everywhere else.

    The coding only ever enters through 2 u Δu, and u vanishes on the zero
    set, so no explicit zero-region branch is needed; coding f there (rather
    than masking) keeps the O(h)-wide classification band from biting into
    the volume term.  Never uses the discrete Laplacian, whose stencil is
    O(1) wrong across the free boundary."""
    lab = mask.labels
    fv = f.values if isinstance(f, ScalarField) else float(f) * np.ones(lab.shape)
    return np.where(lab == CONTACT, a, fv)


def weiss(u: ScalarField, mask: PartitionMask, a: float, x0, r: float, f=1.0) -> float:
    """Scaled energy W(r) = r^{-(n+2)} ∫_{B_r} (|Du|^2 + 2 u Δu) - 2 r^{-(n+3)} ∮ u².

    Δu inside the volume term is region-coded from the mask (f on open,
    a on contact); only this scaling of the three terms is constant on
    fields that are homogeneous of degree two.  f defaults to the
    normalized source 1; pass the problem's f field for the pointwise
    variant (no monotonicity claim then).
    """
    g = u.grid
    if g.n != 2:
        raise ValueError("the energy functionals are implemented for n = 2")
    x0 = np.asarray(x0, dtype=float)
    gv = gradient(u)
    grad2 = ScalarField(g, np.sum(gv.values**2, axis=-1), ring=max(u.ring, 1))
    coded = _coded_laplacian(mask, a, f)
    vol2 = ScalarField(g, 2.0 * u.values * coded, ring=u.ring)
    u2 = ScalarField(g, u.values**2, ring=u.ring)
    n = g.n
    volume = ball_integral(grad2, x0, r) + ball_integral(vol2, x0, r)
    boundary = sphere_integral(u2, x0, r)
    return volume / r ** (n + 2) - 2.0 * boundary / r ** (n + 3)


def weiss_series(
    u: ScalarField, mask: PartitionMask, a: float, x0, radii: Sequence[float], f=1.0
) -> FunctionalSeries:
    radii = np.asarray(sorted(radii), dtype=float)
    vals = np.array([weiss(u, mask, a, x0, r, f) for r in radii])
    return FunctionalSeries(radii, vals, "WEISS")


def weiss_derivative_check(
    u: ScalarField, mask: PartitionMask, a: float, x0, r: float, dr: float, f=1.0
) -> tuple[float, float]:
    """(central difference of W, boundary identity 2 r^{-(n+4)} ∮ |x·Du - 2u|²)."""
    g = u.grid
    x0 = np.asarray(x0, dtype=float)
    lhs = (weiss(u, mask, a, x0, r + dr, f) - weiss(u, mask, a, x0, r - dr, f)) / (2 * dr)
    gv = gradient(u)
    rel = g.nodes() - x0
    integrand = ScalarField(
        g,
        (np.sum(rel * gv.values, axis=-1) - 2.0 * u.values) ** 2,
        ring=max(u.ring, 1),
    )
    rhs = 2.0 * sphere_integral(integrand, x0, r) / r ** (g.n + 4)
    return float(lhs), float(rhs)


def _dirichlet_integral(v: ScalarField, center, r: float) -> float:
    """∫_{B_r} |grad v|^2 with edge-midpoint (staggered) gradients.

    Each difference quotient lives at the midpoint of its edge, which keeps
    kinks that sit on node lines exactly resolved.
    """
    g = v.grid
    h = g.h
    vals = v.values
    total = 0.0
    for ax in range(2):
        d = np.diff(vals, axis=ax) / h
        origin = list(g.lo)
        origin[ax] += h / 2
        dims = list(g.dims)
        dims[ax] -= 1
        stag = Grid(tuple(origin), h, tuple(dims))
        fld = ScalarField(stag, d * d, ring=v.ring)
        total += ball_integral(fld, center, r)
    return total


def acf(vplus: ScalarField, vminus: ScalarField, r: float, center=(0.0, 0.0)) -> float:
    """Φ(r) = r^{-4} ∫_{B_r}|∇v₊|² ∫_{B_r}|∇v₋|² for a disjoint pair.

    Requires v± >= 0 and v₊ v₋ = 0 pointwise (validated to 1e-8).
    """
    for name, v in (("vplus", vplus), ("vminus", vminus)):
        if float(np.min(v.values)) < -1e-8:
            raise ValueError(f"{name} must be nonnegative (min {np.min(v.values)})")
    worst = float(np.max(np.abs(vplus.values * vminus.values)))
    if worst > 1e-8:
        raise ValueError(f"disjointness violated: max v+ v- = {worst} > 1e-8")
    ip = _dirichlet_integral(vplus, center, r)
    im = _dirichlet_integral(vminus, center, r)
    return ip * im / r**4


def acf_series(
    u: ScalarField, e: Sequence[float], radii: Sequence[float], center=(0.0, 0.0)
) -> FunctionalSeries:
    """Φ(r) series for the positive/negative parts of the directional
    derivative ∂_e u (e should be orthogonal to the obstacle direction)."""
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    de = gradient(u).dot(e)
    vplus = ScalarField(u.grid, np.maximum(de.values, 0.0), ring=de.ring)
    vminus = ScalarField(u.grid, np.maximum(-de.values, 0.0), ring=de.ring)
    radii = np.asarray(sorted(radii), dtype=float)
    vals = np.array([acf(vplus, vminus, r, center) for r in radii])
    return FunctionalSeries(radii, vals, "ACF")


def sphere_sup(u: ScalarField, center, r: float, n_samples: int = 1024) -> float:
    """sup over ∂B_r(center) by dense angular sampling with interpolation."""
    pts = sphere_samples(np.asarray(center, dtype=float), r, n_samples)
    return float(np.max(interp(u, pts)))


def nondegeneracy_check(
    u: ScalarField,
    mask: PartitionMask,
    c: float,
    centers,
    radii: Sequence[float],
    M: float | None = None,
) -> dict:
    """Margins sup_{∂B_r(x)} u - u(x) - (c/8n) r² for admissible centers.

    Admissible centers lie in the closure of the non-coincidence region:
    the nearest node or one of its neighbors is OPEN or CONTACT, or simply
    carries u > 0 (free-boundary points sit inside the unresolved collar of
    the mask but still border the positivity set).  Passes when every
    margin >= -M (2h)^2 with M defaulting to the measured max second
    difference of u.
    """
    g = u.grid
    h = g.h
    n = g.n
    if M is None:
        M = d2_sup(u)
    eps_nd = M * (2 * h) ** 2
    lab = mask.labels
    tight = 1e-12 * max(1.0, float(np.max(u.values)))
    margins = []
    skipped = []
    for x in np.asarray(centers, dtype=float).reshape(-1, n):
        idx = np.rint((x - g.lo) / h).astype(int)
        idx = np.clip(idx, 1, np.asarray(g.dims) - 2)
        window = (
            slice(max(idx[0] - 1, 0), idx[0] + 2),
            slice(max(idx[1] - 1, 0), idx[1] + 2),
        )
        nb = lab[window]
        if not (np.any((nb == OPEN) | (nb == CONTACT)) or np.any(u.values[window] > tight)):
            skipped.append([float(v) for v in x])
            continue
        ux = float(interp(u, x))
        for r in radii:
            sup = sphere_sup(u, x, float(r))
            margins.append(
                {
                    "center": [float(v) for v in x],
                    "r": float(r),
                    "margin": sup - ux - (c / (8 * n)) * float(r) ** 2,
                }
            )
    min_margin = min((m["margin"] for m in margins), default=float("inf"))
    return {
        "constant": c,
        "eps_nd": eps_nd,
        "M": float(M),
        "margins": margins,
        "skipped_centers": skipped,
        "min_margin": float(min_margin),
        "pass": bool(min_margin >= -eps_nd),
    }


def cone_directions(delta: float, n_dirs: int = 16) -> NDArray[np.float64]:
    """Unit vectors spanning the cone {x1 > delta |x2|} around e1 (n=2)."""
    if delta <= 0:
        raise ValueError("cone aperture delta must be positive")
    tmax = np.arctan(1.0 / delta)
    theta = np.linspace(-tmax, tmax, max(int(n_dirs), 16))
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def directional_check(
    u: ScalarField,
    delta: float,
    C: float,
    center,
    radius: float,
    n_dirs: int = 16,
) -> dict:
    """Minima of C ∂_e u - u and of ∂_e u over a ball, over cone directions.

    Directions sample the cone {x1 > delta |x'|} on the unit circle; the
    minima come with their witness locations and directions.
    """
    g = u.grid
    center = np.asarray(center, dtype=float)
    dirs = cone_directions(delta, n_dirs)
    gv = gradient(u)
    pts = g.nodes()
    dist = np.linalg.norm(pts - center, axis=-1)
    keep = dist <= radius
    keep[0, :] = keep[-1, :] = False
    keep[:, 0] = keep[:, -1] = False
    if not np.any(keep):
        raise DomainError("no interior nodes inside the requested ball")
    P = pts[keep]
    U = u.values[keep]
    Gv = gv.values[keep]
    de = Gv @ dirs.T  # (m, k)
    drift = C * de - U[:, None]
    i1, j1 = np.unravel_index(np.argmin(drift), drift.shape)
    i2, j2 = np.unravel_index(np.argmin(de), de.shape)
    return {
        "delta": float(delta),
        "C": float(C),
        "center": [float(v) for v in center],
        "radius": float(radius),
        "n_directions": int(len(dirs)),
        "min_drift": float(drift[i1, j1]),
        "min_drift_at": [float(v) for v in P[i1]],
        "min_drift_dir": [float(v) for v in dirs[j1]],
        "min_directional": float(de[i2, j2]),
        "min_directional_at": [float(v) for v in P[i2]],
        "min_directional_dir": [float(v) for v in dirs[j2]],
    }


# --- blowup studies ------------------------------------------------------------

@dataclass(frozen=True)
class ScaleRecord:
    lam: float
    distance: float
    k: float
    e: tuple[float, float]


@dataclass(frozen=True)
class BlowupStudy:
    x0: tuple[float, float]
    a: float
    records: tuple[ScaleRecord, ...]
    verdict: str

    @property
    def distances(self) -> NDArray[np.float64]:
        return np.array([r.distance for r in self.records])

    @property
    def final(self) -> ScaleRecord:
        return self.records[-1]

    def to_dict(self) -> dict:
        return {
            "x0": list(self.x0),
            "a": self.a,
            "verdict": self.verdict,
            "scales": [
                {"lambda": r.lam, "c1_distance": r.distance, "k": r.k, "e": list(r.e)}
                for r in self.records
            ],
        }


def _golden_min(fun, lo: float, hi: float, tol: float, max_iter: int = 60):
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def _smeared_ramp(t: NDArray, delta: float) -> NDArray:
    """Central-difference profile of the ramp t+ with step delta:
    [q(t+d) - q(t-d)] / 2d for q = (t+)^2/2.  Linear outside |t| < |d|."""
    d = abs(delta)
    if d == 0.0:
        return np.maximum(t, 0.0)
    out = np.maximum(t, 0.0)
    band = np.abs(t) < d
    out[band] = (t[band] + d) ** 2 / (4.0 * d)
    return out


def _c1_distance_factory(u: ScalarField, x0: NDArray, lam: float, ref: Grid):
    """Precompute rescaled values/gradients on the unit ball of ref.

    The model's gradient is compared through the same central-difference
    smearing the source grid applies (kink smeared over one cell, width
    h/lam in rescaled coordinates); otherwise that O(h/lam) mismatch floors
    the C^1 distance at small scales.
    """
    pts = ref.nodes()
    keep = np.linalg.norm(pts, axis=-1) <= 1.0
    P = pts[keep]
    src = x0 + lam * P
    base = interp(u, x0)
    V = (interp(u, src) - base) / lam**2
    G = interp_vector(gradient(u), src) / lam
    dref = u.grid.h / lam

    def distance(k: float, theta: float) -> float:
        e = np.array([np.cos(theta), np.sin(theta)])
        s = P @ e
        sp = np.maximum(s, 0.0)
        dv = np.abs(V - 0.5 * k * sp * sp)
        gm = np.stack(
            [k * e[0] * _smeared_ramp(s, dref * e[0]), k * e[1] * _smeared_ramp(s, dref * e[1])],
            axis=-1,
        )
        dg = np.linalg.norm(G - gm, axis=-1)
        return float(np.max(dv + dg))

    return distance


def fit_halfspace(
    u: ScalarField, x0, lam: float, ref: Grid, k_max: float, n_angles: int = 64
) -> tuple[float, float, NDArray]:
    """Best HALFSPACE(k, e) fit of the rescaled field in C¹ sup distance.

    Coarse scan over directions, golden-section refinement in angle with a
    nested golden-section in k.  Returns (distance, k, e).
    """
    distance = _c1_distance_factory(u, np.asarray(x0, dtype=float), lam, ref)

    def best_k(theta: float) -> tuple[float, float]:
        k, d = _golden_min(lambda k_: distance(k_, theta), 0.01, k_max, tol=1e-4 * k_max)
        return k, d

    thetas = np.linspace(-np.pi, np.pi, int(n_angles), endpoint=False)
    coarse = [best_k(t)[1] for t in thetas]
    j = int(np.argmin(coarse))
    span = 2 * np.pi / n_angles
    lo, hi = thetas[j] - span, thetas[j] + span
    theta, _ = _golden_min(lambda t: best_k(t)[1], lo, hi, tol=1e-5)
    k, d = best_k(theta)
    return d, k, np.array([np.cos(theta), np.sin(theta)])


def blowup_study(
    u: ScalarField,
    x0,
    lambdas: Sequence[float],
    a: float,
    ref_dims: int = 65,
    ref_halfwidth: float = 1.05,
    n_angles: int = 64,
    distance_tol: float = 0.05,
    k_rel_tol: float = 0.15,
) -> BlowupStudy:
    """Fit HALFSPACE(k, e) to the rescalings at each scale and classify.

    Verdict HALF_SPACE_LOW when the final fitted k is within 15% of 1 (and
    the fit distance is below the tolerance), HALF_SPACE_HIGH when it is
    within 15% of the contact coefficient a, otherwise UNRESOLVED.
    """
    x0 = np.asarray(x0, dtype=float)
    lambdas = sorted(float(l) for l in lambdas)[::-1]  # decreasing
    floor = 4 * u.grid.h
    for lam in lambdas:
        if lam < floor:
            raise DomainError(f"scale lambda={lam} below the floor 4h={floor}")
    ref = Grid.from_box(
        [-ref_halfwidth, -ref_halfwidth], [ref_halfwidth, ref_halfwidth], [ref_dims, ref_dims]
    )
    records = []
    for lam in lambdas:
        d, k, e = fit_halfspace(u, x0, lam, ref, k_max=3.0 * a, n_angles=n_angles)
        records.append(ScaleRecord(lam=lam, distance=d, k=k, e=(float(e[0]), float(e[1]))))
    last = records[-1]
    verdict = VERDICT_UNRESOLVED
    if last.distance < distance_tol:
        near_low = abs(last.k - 1.0) <= k_rel_tol
        near_high = abs(last.k - a) <= k_rel_tol * a
        if near_low and near_high:
            verdict = VERDICT_LOW if abs(last.k - 1.0) <= abs(last.k - a) / a else VERDICT_HIGH
        elif near_low:
            verdict = VERDICT_LOW
        elif near_high:
            verdict = VERDICT_HIGH
    return BlowupStudy(
        x0=(float(x0[0]), float(x0[1])), a=float(a), records=tuple(records), verdict=verdict
    )
