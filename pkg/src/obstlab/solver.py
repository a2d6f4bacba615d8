"""Projected SOR solver for the discrete bilateral problem 0 <= u <= psi.

At every interior node the converged iterate satisfies exactly one of

    u = 0      and  lap_h u <= f,
    0 < u < psi and  lap_h u  = f,
    u = psi    and  lap_h u >= f,

because each PSOR update clamps the relaxed Gauss-Seidel target into
[0, psi_i].  Sweeps are sequential (lexicographic) by default; a red-black
ordering with two internally order-independent half-sweeps is available for
parallel contracts.  The working buffer is private; all outputs are
immutable fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit
from numpy.typing import NDArray

from .grid import Grid, ScalarField, gradient, laplacian, sample

__all__ = [
    "Problem",
    "SolverConfig",
    "PartitionMask",
    "SolveReport",
    "ValidationError",
    "ConvergenceError",
    "ZERO",
    "OPEN",
    "CONTACT",
    "UNRESOLVED",
    "default_eps_mask",
    "solve",
    "classify",
    "residuals",
    "d2_sup",
    "d2_sup_study",
    "discrete_energy",
    "measure_fraction_gamma",
    "psor_sweep",
]


class ValidationError(ValueError):
    """Problem data violates an admissibility requirement."""


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, update_norm: float, tol: float):
        self.iterations = iterations
        self.update_norm = update_norm
        super().__init__(
            f"PSOR did not converge in {iterations} sweeps: last update norm "
            f"{update_norm:.3e} > tol {tol:.3e}"
        )


ZERO, OPEN, CONTACT, UNRESOLVED = 0, 1, 2, 3
_LABEL_NAMES = {ZERO: "zero", OPEN: "open", CONTACT: "contact", UNRESOLVED: "unresolved"}


@dataclass(frozen=True)
class Problem:
    """Data of one bilateral obstacle instance on a box grid.

    f is the source (min f >= c > 0), psi >= 0 the upper obstacle with
    discrete Laplacian >= c wherever it is positive and smooth, and a > 1
    records the contact Laplacian scale used by the energy functionals.
    Dirichlet data g must satisfy 0 <= g <= psi on the box boundary.
    """

    grid: Grid
    f: ScalarField
    psi: ScalarField
    c: float
    a: float
    dirichlet: ScalarField

    def __post_init__(self):
        g = self.grid
        for name in ("f", "psi", "dirichlet"):
            fld = getattr(self, name)
            if fld.grid.dims != g.dims or abs(fld.grid.h - g.h) > 1e-14:
                raise ValidationError(f"{name} lives on a different grid")
        if self.c <= 0:
            raise ValidationError(f"need c > 0, got c={self.c}")
        if self.a <= 1:
            raise ValidationError(f"need a > 1, got a={self.a}")
        if float(np.min(self.f.values)) < self.c - 1e-12:
            raise ValidationError(f"min f = {np.min(self.f.values)} < c = {self.c}")
        if float(np.min(self.psi.values)) < -1e-12:
            raise ValidationError("psi must be nonnegative")
        gb = _boundary_values(self.dirichlet.values)
        pb = _boundary_values(self.psi.values)
        if np.any(gb < -1e-12) or np.any(gb > pb + 1e-10):
            raise ValidationError("boundary data must satisfy 0 <= g <= psi")
        _check_psi_laplacian(self)

    @property
    def h(self) -> float:
        return self.grid.h


def _boundary_values(v: NDArray) -> NDArray:
    if v.ndim == 1:
        return np.array([v[0], v[-1]])
    edges = [v[0, :], v[-1, :], v[:, 0], v[:, -1]]
    return np.concatenate(edges)


def _check_psi_laplacian(p: Problem) -> None:
    """Where psi > 0 on a full stencil neighborhood, require lap_h psi >= c."""
    lap = laplacian(p.psi)
    pos = p.psi.values > 1e-12
    smooth = np.ones_like(pos)
    n = p.grid.n
    core = tuple(slice(1, -1) for _ in range(n))
    inner = np.zeros_like(pos)
    inner[core] = True
    for ax in range(n):
        for sh in (-1, 1):
            smooth &= np.roll(pos, sh, axis=ax)
    check = pos & smooth & inner
    if np.any(check):
        bad = lap.values[check] < p.c - 1e-8
        if np.any(bad):
            worst = float(np.min(lap.values[check]))
            raise ValidationError(
                f"discrete Laplacian of psi drops to {worst} < c = {p.c} inside its support"
            )


@dataclass(frozen=True)
class SolverConfig:
    omega: float = 1.5
    tol: float = 1e-10
    max_iters: int = 1_000_000
    sweep: str = "lex"  # "lex" | "redblack"
    eps_mask: float | None = None  # default 4 h^2 max(1, a)

    def __post_init__(self):
        if not 1.0 <= self.omega < 2.0:
            raise ValidationError(f"relaxation omega must lie in [1, 2), got {self.omega}")
        if self.sweep not in ("lex", "redblack"):
            raise ValidationError(f"unknown sweep order {self.sweep!r}")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValidationError("tol must be > 0 and max_iters >= 1")


def default_eps_mask(h: float, a: float) -> float:
    """Band half-width for region classification: O(h^2) because the
    solution leaves its coincidence sets quadratically."""
    return 4.0 * h * h * max(1.0, a)


@dataclass(frozen=True)
class PartitionMask:
    """Per-node region label realizing {u=0, grad u=0}, {0<u<psi}, {u=psi}.

    Labels partition the interior; the outermost ring is UNRESOLVED by
    convention (no centered gradient there).
    """

    grid: Grid
    labels: NDArray[np.int8]
    eps_mask: float

    def __post_init__(self):
        lab = np.array(self.labels, dtype=np.int8, copy=True)
        if lab.shape != self.grid.dims:
            raise ValueError("label array shape mismatch")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    def points_of(self, label: int) -> NDArray[np.float64]:
        """Coordinates of all nodes with the given label, shape (m, n)."""
        idx = np.argwhere(self.labels == label)
        return self.grid.lo + self.grid.h * idx

    def counts(self) -> dict[str, int]:
        return {name: int(np.sum(self.labels == lab)) for lab, name in _LABEL_NAMES.items()}


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_update_norm: float
    residuals: dict
    d2_sup: float
    measure_fraction_gamma: float


# --- PSOR kernels -------------------------------------------------------------

@njit(cache=True)
def _sweep_lex_2d(u, psi, rhs, omega):
    nx, ny = u.shape
    worst = 0.0
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            gs = 0.25 * (u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1] - rhs[i, j])
            new = u[i, j] + omega * (gs - u[i, j])
            if new < 0.0:
                new = 0.0
            cap = psi[i, j]
            if new > cap:
                new = cap
            d = abs(new - u[i, j])
            if d > worst:
                worst = d
            u[i, j] = new
    return worst


@njit(cache=True)
def _sweep_rb_2d(u, psi, rhs, omega):
    nx, ny = u.shape
    worst = 0.0
    for color in (0, 1):
        for i in range(1, nx - 1):
            jstart = 1 + ((i + color) & 1)
            for j in range(jstart, ny - 1, 2):
                gs = 0.25 * (u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1] - rhs[i, j])
                new = u[i, j] + omega * (gs - u[i, j])
                if new < 0.0:
                    new = 0.0
                cap = psi[i, j]
                if new > cap:
                    new = cap
                d = abs(new - u[i, j])
                if d > worst:
                    worst = d
                u[i, j] = new
    return worst


@njit(cache=True)
def _sweep_lex_1d(u, psi, rhs, omega):
    n = u.shape[0]
    worst = 0.0
    for i in range(1, n - 1):
        gs = 0.5 * (u[i - 1] + u[i + 1] - rhs[i])
        new = u[i] + omega * (gs - u[i])
        if new < 0.0:
            new = 0.0
        cap = psi[i]
        if new > cap:
            new = cap
        d = abs(new - u[i])
        if d > worst:
            worst = d
        u[i] = new
    return worst


@njit(cache=True)
def _sweep_rb_1d(u, psi, rhs, omega):
    n = u.shape[0]
    worst = 0.0
    for start in (1, 2):
        for i in range(start, n - 1, 2):
            gs = 0.5 * (u[i - 1] + u[i + 1] - rhs[i])
            new = u[i] + omega * (gs - u[i])
            if new < 0.0:
                new = 0.0
            cap = psi[i]
            if new > cap:
                new = cap
            d = abs(new - u[i])
            if d > worst:
                worst = d
            u[i] = new
    return worst


def psor_sweep(u: NDArray, psi: NDArray, rhs: NDArray, omega: float, sweep: str = "lex") -> float:
    """One full in-place PSOR sweep; returns the sup-norm of the update.

    ``rhs`` is h^2 * f.  Exposed so energy-monotonicity tests can drive the
    iteration sweep by sweep.
    """
    if u.ndim == 2:
        fn = _sweep_lex_2d if sweep == "lex" else _sweep_rb_2d
    else:
        fn = _sweep_lex_1d if sweep == "lex" else _sweep_rb_1d
    return float(fn(u, psi, rhs, omega))


def solve(p: Problem, cfg: SolverConfig = SolverConfig()) -> tuple[ScalarField, PartitionMask, SolveReport]:
    """Solve the discrete bilateral complementarity problem.

    Returns the solution field, its region partition, and a report with the
    iteration count, per-region PDE residuals, the max second-difference
    magnitude over the concentric half box, and the fraction of interior
    cells crossed by the zero-set boundary.
    """
    g = p.grid
    u = np.array(p.dirichlet.values, dtype=float)
    core = tuple(slice(1, -1) for _ in range(g.n))
    u[core] = np.clip(0.0, 0.0, p.psi.values[core])
    psi = np.ascontiguousarray(p.psi.values)
    rhs = np.ascontiguousarray(g.h**2 * p.f.values)
    u = np.ascontiguousarray(u)

    update = np.inf
    iters = 0
    while iters < cfg.max_iters:
        update = psor_sweep(u, psi, rhs, cfg.omega, cfg.sweep)
        iters += 1
        if update <= cfg.tol:
            break
    else:
        raise ConvergenceError(iters, update, cfg.tol)
    if update > cfg.tol:
        raise ConvergenceError(iters, update, cfg.tol)

    uf = ScalarField(g, u)
    eps = cfg.eps_mask if cfg.eps_mask is not None else default_eps_mask(g.h, p.a)
    mask = classify(uf, p, eps)
    res = residuals(uf, mask, p)
    rep = SolveReport(
        iterations=iters,
        final_update_norm=float(update),
        residuals=res,
        d2_sup=d2_sup(uf),
        measure_fraction_gamma=measure_fraction_gamma(mask),
    )
    return uf, mask, rep


# --- classification and diagnostics -------------------------------------------

def classify(u: ScalarField, p: Problem, eps_mask: float) -> PartitionMask:
    """Label interior nodes ZERO / OPEN / CONTACT / UNRESOLVED.

    The coincidence sets are value-tight: the solver clamps to exactly 0 or
    exactly psi, and sampled model fields vanish exactly, so ZERO takes
    u below a relative floor (plus the |grad u| <= sqrt(eps_mask) condition
    realizing {u=0, grad u=0}), and CONTACT takes psi - u below the floor.
    This pins the label change to one cell of the true interface, as the
    O(h^2) band eps_mask is meant to.  CONTACT additionally needs
    psi > 2 eps_mask, keeping it out of the squeeze region where both
    constraints coincide and the zero set owns the nodes.  Nodes within the
    eps_mask band that pass neither tight test stay UNRESOLVED, so OPEN
    still implies u > eps_mask and psi - u > eps_mask.
    """
    g = u.grid
    if np.min(u.values) < -eps_mask or np.max(u.values - p.psi.values) > eps_mask:
        raise ValidationError("field is not admissible for classification (0 <= u <= psi within eps)")
    tight = 1e-9 * max(1.0, float(np.max(p.psi.values)))
    gv = gradient(u)
    gnorm = np.sqrt(np.sum(gv.values**2, axis=-1))
    near_zero = (np.abs(u.values) <= tight) & (gnorm <= np.sqrt(eps_mask))
    near_psi = (p.psi.values - u.values <= tight) & (p.psi.values > 2 * eps_mask)
    is_open = (u.values > eps_mask) & (p.psi.values - u.values > eps_mask)

    labels = np.full(g.dims, UNRESOLVED, dtype=np.int8)
    labels[near_psi] = CONTACT
    labels[near_zero] = ZERO
    labels[is_open & ~near_zero & ~near_psi] = OPEN
    # the outermost ring has no centered gradient: leave it out of the partition
    edge = np.ones(g.dims, dtype=bool)
    edge[tuple(slice(1, -1) for _ in range(g.n))] = False
    labels[edge] = UNRESOLVED
    return PartitionMask(g, labels, eps_mask)


def _erode(mask: NDArray[np.bool_], k: int) -> NDArray[np.bool_]:
    out = mask.copy()
    for _ in range(k):
        nxt = out.copy()
        for ax in range(mask.ndim):
            nxt &= np.roll(out, 1, axis=ax) & np.roll(out, -1, axis=ax)
        out = nxt
    return out


def residuals(u: ScalarField, mask: PartitionMask, p: Problem, zero_erosion: int | None = None) -> dict:
    """Per-region sup residuals of the discrete equation.

    The ZERO and CONTACT sups are taken a few cells inside their regions
    (erosion width ~ sqrt(8 max(1,a)/c) + 1): the classification band is
    O(h^2) wide, so nodes within a few cells of the free boundary are
    legitimately governed by the neighboring regime.
    """
    lap = laplacian(u)
    lpsi = laplacian(p.psi)
    lab = mask.labels
    if zero_erosion is None:
        zero_erosion = 1 + int(np.ceil(np.sqrt(8.0 * max(1.0, p.a) / p.c)))
    out: dict = {"zero_erosion": zero_erosion}

    open_nodes = lab == OPEN
    out["open_sup"] = (
        float(np.max(np.abs(lap.values - p.f.values)[open_nodes])) if np.any(open_nodes) else 0.0
    )
    contact_core = _erode(lab == CONTACT, zero_erosion)
    out["contact_sup"] = (
        float(np.max(np.abs(lap.values - lpsi.values)[contact_core])) if np.any(contact_core) else 0.0
    )
    zero_core = _erode(lab == ZERO, zero_erosion)
    out["zero_sup"] = float(np.max(np.abs(lap.values[zero_core]))) if np.any(zero_core) else 0.0
    oc = (lab == OPEN) | (lab == CONTACT)
    out["min_laplacian_open_contact"] = float(np.min(lap.values[oc])) if np.any(oc) else float("inf")
    return out


def d2_sup(u: ScalarField, shrink: float = 0.5) -> float:
    """Max magnitude over the concentric shrunken box of all second
    differences: axis, cross, and both diagonals."""
    g = u.grid
    v = u.values
    h2 = g.h**2
    lo, hi = g.valid_box(max(u.ring, 1))
    center = 0.5 * (g.lo + g.hi)
    half = shrink * 0.5 * (g.hi - g.lo)
    lo = np.maximum(lo, center - half)
    hi = np.minimum(hi, center + half)
    axes = g.axes()
    if g.n == 1:
        keep = (axes[0] >= lo[0]) & (axes[0] <= hi[0])
        keep[[0, -1]] = False
        d2 = (v[2:] + v[:-2] - 2 * v[1:-1]) / h2
        return float(np.max(np.abs(d2[keep[1:-1]])))
    keep = (
        (axes[0][:, None] >= lo[0])
        & (axes[0][:, None] <= hi[0])
        & (axes[1][None, :] >= lo[1])
        & (axes[1][None, :] <= hi[1])
    )
    keep[[0, -1], :] = False
    keep[:, [0, -1]] = False
    kc = keep[1:-1, 1:-1]
    best = 0.0
    dxx = (v[2:, 1:-1] + v[:-2, 1:-1] - 2 * v[1:-1, 1:-1]) / h2
    dyy = (v[1:-1, 2:] + v[1:-1, :-2] - 2 * v[1:-1, 1:-1]) / h2
    dxy = (v[2:, 2:] + v[:-2, :-2] - v[2:, :-2] - v[:-2, 2:]) / (4 * h2)
    dd1 = (v[2:, 2:] + v[:-2, :-2] - 2 * v[1:-1, 1:-1]) / (2 * h2)
    dd2 = (v[2:, :-2] + v[:-2, 2:] - 2 * v[1:-1, 1:-1]) / (2 * h2)
    for d2 in (dxx, dyy, dxy, dd1, dd2):
        if np.any(kc):
            best = max(best, float(np.max(np.abs(d2[kc]))))
    return best


def d2_sup_study(make_problem, h_list: Sequence[float], cfg: SolverConfig = SolverConfig()) -> list[tuple[float, float]]:
    """Solve the same instance at several spacings and report (h, d2_sup).

    ``make_problem(h)`` must return the Problem discretized at spacing h.
    """
    out = []
    for h in h_list:
        p = make_problem(h)
        u, _, rep = solve(p, cfg)
        out.append((float(h), rep.d2_sup))
    return out


def discrete_energy(u: NDArray, f: NDArray, h: float) -> float:
    """Edge-based Dirichlet energy + load:  sum(|grad u|^2/2 + f u) h^n.

    This is the convex functional that projected relaxation descends, so it
    must be non-increasing sweep over sweep.
    """
    n = u.ndim
    e = 0.0
    for ax in range(n):
        sl_hi = tuple(slice(1, None) if k == ax else slice(None) for k in range(n))
        sl_lo = tuple(slice(0, -1) if k == ax else slice(None) for k in range(n))
        d = (u[sl_hi] - u[sl_lo]) / h
        e += 0.5 * float(np.sum(d * d))
    e += float(np.sum(f * u))
    return e * h**n


def measure_fraction_gamma(mask: PartitionMask) -> float:
    """Fraction of interior cells with both ZERO and non-ZERO corners: the
    discrete surrogate of the zero-set boundary having measure zero."""
    z = mask.labels == ZERO
    g = mask.grid
    if g.n == 1:
        cells_zero = z[:-1] | z[1:]
        cells_all = z[:-1] & z[1:]
        crossed = cells_zero & ~cells_all
        return float(np.sum(crossed)) / crossed.size
    any_zero = z[:-1, :-1] | z[1:, :-1] | z[:-1, 1:] | z[1:, 1:]
    all_zero = z[:-1, :-1] & z[1:, :-1] & z[:-1, 1:] & z[1:, 1:]
    crossed = any_zero & ~all_zero
    return float(np.sum(crossed)) / crossed.size
