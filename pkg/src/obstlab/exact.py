"""Closed-form model fields and the exact 1D bilateral obstacle oracle.

The closed forms double as ground truth for quadrature/solver tests and as
the config-file vocabulary (family name + parameters).  The 1D oracle
constructs the solution of

    u'' = f on {0 < u < psi},   u = 0 or u = psi elsewhere,   u C^1,

for constant f and a model/constant upper obstacle, by patching quadratic
arcs and solving the C^1 matching conditions; it never touches the grid
solver, so solver tests against it are not circular.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "ClosedForm",
    "PiecewiseQuadratic1D",
    "ExactSolution1D",
    "OracleFailure",
    "zero",
    "affine",
    "constant",
    "quadratic",
    "halfspace",
    "model_psi",
    "piecewise_1d",
    "eval_form",
    "second_derivative_sup",
    "solve_1d_exact",
]


class OracleFailure(RuntimeError):
    """No admissible arc configuration found within the iteration budget."""


def _unit(e) -> NDArray[np.float64]:
    e = np.asarray(e, dtype=float)
    norm = float(np.linalg.norm(e))
    if norm == 0.0:
        raise ValueError("direction must be nonzero")
    return e / norm


@dataclass(frozen=True)
class PiecewiseQuadratic1D:
    """t |-> a_i t^2 + b_i t + c_i on [breaks[i], breaks[i+1]].

    Value and first derivative must be continuous at the interior
    breakpoints (C^{1,1} matching).
    """

    breaks: NDArray[np.float64]
    coeffs: NDArray[np.float64]  # shape (len(breaks)-1, 3): (a, b, c)

    def __post_init__(self):
        br = np.asarray(self.breaks, dtype=float)
        co = np.asarray(self.coeffs, dtype=float)
        if br.ndim != 1 or len(br) < 2 or np.any(np.diff(br) <= 0):
            raise ValueError("breakpoints must be strictly increasing, length >= 2")
        if co.shape != (len(br) - 1, 3):
            raise ValueError(f"coeffs shape {co.shape} != ({len(br) - 1}, 3)")
        for k in range(1, len(br) - 1):
            t = br[k]
            vl = co[k - 1, 0] * t * t + co[k - 1, 1] * t + co[k - 1, 2]
            vr = co[k, 0] * t * t + co[k, 1] * t + co[k, 2]
            dl = 2 * co[k - 1, 0] * t + co[k - 1, 1]
            dr = 2 * co[k, 0] * t + co[k, 1]
            scale = 1.0 + abs(vl) + abs(dl)
            if abs(vl - vr) > 1e-9 * scale or abs(dl - dr) > 1e-9 * scale:
                raise ValueError(f"not C^1 at breakpoint t={t}: value {vl} vs {vr}, slope {dl} vs {dr}")
        br.setflags(write=False)
        co.setflags(write=False)
        object.__setattr__(self, "breaks", br)
        object.__setattr__(self, "coeffs", co)

    def _piece(self, t: NDArray) -> NDArray:
        return np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, len(self.coeffs) - 1)

    def __call__(self, t) -> NDArray[np.float64]:
        t = np.asarray(t, dtype=float)
        k = self._piece(t)
        a, b, c = self.coeffs[k, 0], self.coeffs[k, 1], self.coeffs[k, 2]
        return a * t * t + b * t + c

    def derivative(self, t) -> NDArray[np.float64]:
        t = np.asarray(t, dtype=float)
        k = self._piece(t)
        return 2 * self.coeffs[k, 0] * t + self.coeffs[k, 1]

    def second_derivative(self, t) -> NDArray[np.float64]:
        t = np.asarray(t, dtype=float)
        k = self._piece(t)
        return 2 * self.coeffs[k, 0] * np.ones_like(t)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.breaks[0]), float(self.breaks[-1])

    @staticmethod
    def constant(lo: float, hi: float, value: float) -> "PiecewiseQuadratic1D":
        return PiecewiseQuadratic1D(np.array([lo, hi]), np.array([[0.0, 0.0, value]]))

    @staticmethod
    def model(lo: float, hi: float, a: float, kink: float = 0.0) -> "PiecewiseQuadratic1D":
        """(a/2) ((t - kink)^+)^2 on [lo, hi]."""
        if not lo < kink < hi:
            raise ValueError("kink must lie strictly inside [lo, hi]")
        # (a/2)(t-k)^2 = (a/2)t^2 - a k t + (a/2)k^2
        right = [a / 2.0, -a * kink, a / 2.0 * kink * kink]
        return PiecewiseQuadratic1D(
            np.array([lo, kink, hi]), np.array([[0.0, 0.0, 0.0], right])
        )


# --- closed forms -------------------------------------------------------------

_FAMILIES = ("zero", "affine", "quadratic", "halfspace", "model_psi", "piecewise1d")


@dataclass(frozen=True)
class ClosedForm:
    """A member of the model catalog, evaluable (with gradient) anywhere.

    families:
      zero                 0
      affine               c0 + g.x
      quadratic            c0 + g.x + x.Q x / 2
      halfspace(k, e)      (k/2) ((x.e)+)^2          k > 0, |e| = 1
      model_psi(a, e)      (a/2) ((x.e)+)^2          a > 1, |e| = 1
      piecewise1d(p, e)    p(x.e) for a C^{1,1} piecewise quadratic p
    """

    family: str
    k: float = 0.0
    e: tuple[float, ...] = ()
    c0: float = 0.0
    g: tuple[float, ...] = ()
    Q: tuple[tuple[float, ...], ...] = ()
    profile: PiecewiseQuadratic1D | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown closed form family {self.family!r}")
        if self.family in ("halfspace", "model_psi", "piecewise1d"):
            e = _unit(self.e)
            object.__setattr__(self, "e", tuple(float(x) for x in e))
        if self.family == "halfspace" and self.k <= 0:
            raise ValueError("halfspace requires k > 0")
        if self.family == "model_psi" and self.k <= 1:
            raise ValueError("model_psi requires a > 1")

    def __call__(self, x) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam == "zero":
            return np.zeros(x.shape[:-1])
        if fam == "affine":
            return self.c0 + x @ np.asarray(self.g, dtype=float)
        if fam == "quadratic":
            Q = np.asarray(self.Q, dtype=float)
            g = np.asarray(self.g, dtype=float)
            return self.c0 + x @ g + 0.5 * np.einsum("...i,ij,...j->...", x, Q, x)
        if fam in ("halfspace", "model_psi"):
            s = np.maximum(x @ np.asarray(self.e), 0.0)
            return 0.5 * self.k * s * s
        if fam == "piecewise1d":
            return self.profile(x @ np.asarray(self.e))
        raise AssertionError(fam)

    def grad(self, x) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam == "zero":
            return np.zeros(x.shape)
        if fam == "affine":
            return np.broadcast_to(np.asarray(self.g, dtype=float), x.shape).copy()
        if fam == "quadratic":
            Q = np.asarray(self.Q, dtype=float)
            return np.asarray(self.g, dtype=float) + x @ Q.T
        if fam in ("halfspace", "model_psi"):
            e = np.asarray(self.e)
            s = np.maximum(x @ e, 0.0)
            return self.k * s[..., None] * e
        if fam == "piecewise1d":
            e = np.asarray(self.e)
            return self.profile.derivative(x @ e)[..., None] * e
        raise AssertionError(fam)

    def second_derivative_sup(self) -> float:
        fam = self.family
        if fam in ("zero", "affine"):
            return 0.0
        if fam == "quadratic":
            Q = np.asarray(self.Q, dtype=float)
            return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (Q + Q.T)))))
        if fam in ("halfspace", "model_psi"):
            return float(self.k)
        if fam == "piecewise1d":
            return float(np.max(np.abs(2.0 * self.profile.coeffs[:, 0])))
        raise AssertionError(fam)


def zero() -> ClosedForm:
    return ClosedForm("zero")


def constant(value: float, n: int = 2) -> ClosedForm:
    return ClosedForm("affine", c0=float(value), g=(0.0,) * n)


def affine(c0: float, g: Sequence[float]) -> ClosedForm:
    return ClosedForm("affine", c0=float(c0), g=tuple(float(x) for x in g))


def quadratic(c0: float, g: Sequence[float], Q: Sequence[Sequence[float]]) -> ClosedForm:
    return ClosedForm(
        "quadratic", c0=float(c0), g=tuple(float(x) for x in g), Q=tuple(tuple(float(y) for y in row) for row in Q)
    )


def halfspace(k: float, e: Sequence[float]) -> ClosedForm:
    return ClosedForm("halfspace", k=float(k), e=tuple(e))


def model_psi(a: float, e: Sequence[float]) -> ClosedForm:
    return ClosedForm("model_psi", k=float(a), e=tuple(e))


def piecewise_1d(profile: PiecewiseQuadratic1D, e: Sequence[float]) -> ClosedForm:
    return ClosedForm("piecewise1d", e=tuple(e), profile=profile)


def eval_form(form: ClosedForm, x) -> float | NDArray[np.float64]:
    out = form(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def second_derivative_sup(form: ClosedForm) -> float:
    return form.second_derivative_sup()


# --- exact 1D solver ----------------------------------------------------------

REGION_ZERO = "zero"
REGION_OPEN = "open"
REGION_CONTACT = "contact"


@dataclass(frozen=True)
class ExactSolution1D:
    """Oracle output: the solution, its region decomposition and the free
    boundary locations (zero-set boundary and contact-set boundary)."""

    u: PiecewiseQuadratic1D
    regions: tuple[tuple[float, float, str], ...]
    gamma: tuple[float, ...]       # boundary of {u = 0} strictly inside the interval
    gamma_psi: tuple[float, ...]   # boundary of {u = psi} strictly inside the interval
    # note {u = psi} includes any zero region where psi itself vanishes, so a
    # contact region growing out of the obstacle's kink has no left boundary

    def region_at(self, t: float) -> str:
        for lo, hi, lab in self.regions:
            if lo - 1e-12 <= t <= hi + 1e-12:
                return lab
        raise ValueError(f"t={t} outside the solved interval")


def _bisect(fun, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    flo, fhi = fun(lo), fun(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise OracleFailure(f"matching condition not bracketed on [{lo}, {hi}]: f={flo}, {fhi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if fm == 0.0 or (hi - lo) < tol:
            return mid
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def _psi_structure(psi: PiecewiseQuadratic1D, a: float, lo: float, hi: float):
    """Recognize the obstacle as constant K or model (a/2)((t-kink)+)^2."""
    co = psi.coeffs
    if np.all(np.abs(co[:, 0]) < 1e-14) and np.all(np.abs(co[:, 1]) < 1e-14):
        vals = co[:, 2]
        if np.ptp(vals) > 1e-12:
            raise OracleFailure("unsupported obstacle: piecewise constant but not constant")
        return ("constant", float(vals[0]))
    # model: zero piece(s) up to a kink, then (a/2)(t-kink)^2
    kink = None
    for i, (aa, bb, cc) in enumerate(co):
        if abs(aa) < 1e-14 and abs(bb) < 1e-14 and abs(cc) < 1e-14:
            continue
        if abs(2 * aa - a) > 1e-10:
            raise OracleFailure(f"obstacle curvature {2 * aa} != a = {a}")
        # (a/2)(t-k)^2 -> b = -a k, c = a k^2/2
        k = -bb / a
        if abs(cc - 0.5 * a * k * k) > 1e-10 * (1 + abs(cc)):
            raise OracleFailure("obstacle piece is not a shifted model parabola")
        if kink is None:
            kink = k
        elif abs(kink - k) > 1e-10:
            raise OracleFailure("obstacle has multiple distinct parabolic pieces")
    if kink is None or not (lo <= kink < hi):
        raise OracleFailure("model obstacle kink must lie inside the interval")
    # verify psi vanishes left of the kink
    ts = np.linspace(lo, kink, 17)
    if np.any(np.abs(psi(ts)) > 1e-12):
        raise OracleFailure("model obstacle must vanish left of its kink")
    return ("model", float(kink))


def _merge_regions(regions):
    merged = []
    for lo, hi, lab in regions:
        if hi - lo < 1e-13:
            continue
        if merged and merged[-1][2] == lab and abs(merged[-1][1] - lo) < 1e-12:
            merged[-1] = (merged[-1][0], hi, lab)
        else:
            merged.append((lo, hi, lab))
    return tuple(merged)


def solve_1d_exact(
    f: float,
    a: float,
    interval: tuple[float, float],
    psi: PiecewiseQuadratic1D,
    bc: tuple[float, float],
) -> ExactSolution1D:
    """Exact solution of the 1D bilateral problem 0 <= u <= psi, u'' = f on
    the open set, by quadratic-arc patching.

    Supports constant f > 0 with either a constant obstacle or the model
    obstacle (a/2)((t - kink)+)^2, f <= a.  Matching conditions are solved
    by bisection to 1e-12.
    """
    lo, hi = float(interval[0]), float(interval[1])
    f = float(f)
    a = float(a)
    ul, ur = float(bc[0]), float(bc[1])
    if not lo < hi:
        raise ValueError("empty interval")
    if f <= 0:
        raise ValueError(f"need f > 0, got {f}")
    plo, phi_ = float(psi(lo)), float(psi(hi))
    tol = 1e-12 * (1 + abs(ul) + abs(ur))
    if ul < -tol or ur < -tol or ul > plo + 1e-10 or ur > phi_ + 1e-10:
        raise ValueError(f"boundary data ({ul}, {ur}) not within [0, psi] = [0, ({plo}, {phi_})]")
    ul = min(max(ul, 0.0), plo)
    ur = min(max(ur, 0.0), phi_)

    kind, param = _psi_structure(psi, a, lo, hi)
    if kind == "model" and f > a + 1e-12:
        raise ValueError(f"model obstacle requires f <= a, got f={f} > a={a}")

    pieces: list[tuple[float, float, float, float, str]] = []  # (lo, hi, a2, a1, a0) + label via tuple

    def arc_coeffs(s: float, v: float, slope: float) -> tuple[float, float, float]:
        # u(t) = (f/2)(t-s)^2 + slope (t-s) + v
        return (f / 2.0, slope - f * s, f / 2.0 * s * s - slope * s + v)

    def add(lo_, hi_, coeffs, label):
        pieces.append((float(lo_), float(hi_), float(coeffs[0]), float(coeffs[1]), float(coeffs[2]), label))

    def classical_segment(t0: float, t1: float, v0: float, v1: float):
        """One-sided problem (u >= 0, u'' = f) on [t0, t1]; no upper contact."""
        L = t1 - t0
        if v0 <= 0.0 and v1 <= 0.0:
            add(t0, t1, (0.0, 0.0, 0.0), REGION_ZERO)
            return
        # single arc through both endpoint values
        p = (v1 - v0 - f / 2.0 * L * L) / L
        vertex_t = t0 - p / f
        vertex_v = v0 - p * p / (2 * f)
        if not (t0 < vertex_t < t1) or vertex_v >= 0.0:
            add(t0, t1, arc_coeffs(vertex_t, vertex_v, 0.0), REGION_OPEN)
            return
        # arc dips below zero: split into arc / zero / arc with tangential matching
        z0 = t0 + np.sqrt(2 * v0 / f) if v0 > 0 else t0
        z1 = t1 - np.sqrt(2 * v1 / f) if v1 > 0 else t1
        if z0 > z1 + 1e-12:
            raise OracleFailure("inconsistent zero-set patch in classical segment")
        z0, z1 = min(z0, z1), max(z0, z1)
        if v0 > 0:
            add(t0, z0, arc_coeffs(z0, 0.0, 0.0), REGION_OPEN)
        add(z0, z1, (0.0, 0.0, 0.0), REGION_ZERO)
        if v1 > 0:
            add(z1, t1, arc_coeffs(z1, 0.0, 0.0), REGION_OPEN)

    if kind == "constant":
        classical_segment(lo, hi, ul, ur)
    else:
        kink = param
        if ul > 1e-12:
            raise ValueError("model obstacle forces u = 0 at the left endpoint")
        # squeezed: 0 <= u <= psi = 0 on [lo, kink]
        add(lo, kink, (0.0, 0.0, 0.0), REGION_ZERO)
        R = hi - kink

        def psi_k(t):  # obstacle relative to the kink at 0
            return 0.5 * a * t * t

        if ur <= 1e-14:
            add(kink, hi, (0.0, 0.0, 0.0), REGION_ZERO)
        else:
            s_star = R - np.sqrt(2 * ur / f)
            feasible = True
            if s_star < -1e-14:
                # arc from the kink with positive slope; always pokes above psi
                feasible = False
            else:
                tc = f * s_star / (f - a) if a > f else None  # critical point of arc - psi
                if tc is not None and s_star < tc < R:
                    gap = f / 2.0 * (tc - s_star) ** 2 - psi_k(tc)
                    feasible = gap <= 1e-12
            if feasible:
                if s_star > 1e-14:
                    add(kink, kink + s_star, (0.0, 0.0, 0.0), REGION_ZERO)
                coeffs = arc_coeffs(kink + s_star, 0.0, 0.0)
                if abs(f - a) < 1e-12 and abs(s_star) < 1e-12:
                    # the arc coincides with the obstacle: label it contact
                    add(kink, hi, coeffs, REGION_CONTACT)
                else:
                    add(kink + max(s_star, 0.0), hi, coeffs, REGION_OPEN)
            else:
                # contact from the kink: u = psi on [kink, kink+q], exit arc after
                def exit_mismatch(q):
                    # C^1 exit at q: arc value at R minus ur
                    return psi_k(q) + a * q * (R - q) + f / 2.0 * (R - q) ** 2 - ur

                q = _bisect(exit_mismatch, 0.0, R)
                # contact piece: (a/2)(t-kink)^2 in global coordinates
                ck = (a / 2.0, -a * kink, a / 2.0 * kink * kink)
                if q >= R - 1e-12:
                    add(kink, hi, ck, REGION_CONTACT)
                else:
                    add(kink, kink + q, ck, REGION_CONTACT)
                    tq = kink + q
                    # exit arc: value psi_k(q), slope a q, curvature f
                    a2 = f / 2.0
                    a1 = a * q - f * tq
                    a0 = psi_k(q) - a * q * tq + f / 2.0 * tq * tq
                    add(tq, hi, (a2, a1, a0), REGION_OPEN)

    pieces.sort(key=lambda p: p[0])
    regions = _merge_regions([(p[0], p[1], p[5]) for p in pieces])
    breaks = [pieces[0][0]] + [p[1] for p in pieces]
    coeffs = np.array([[p[2], p[3], p[4]] for p in pieces])
    # drop zero-length pieces
    keep = np.diff(np.array(breaks)) > 1e-13
    coeffs = coeffs[keep]
    breaks = np.concatenate([[breaks[0]], np.array(breaks[1:])[keep]])
    u = PiecewiseQuadratic1D(np.asarray(breaks), coeffs)

    def interior_boundaries(member) -> tuple[float, ...]:
        # merge member regions into intervals; report endpoints inside (lo, hi)
        intervals = []
        for rlo, rhi, lab in regions:
            if not member(rlo, rhi, lab):
                continue
            if intervals and abs(intervals[-1][1] - rlo) < 1e-12:
                intervals[-1][1] = rhi
            else:
                intervals.append([rlo, rhi])
        out = []
        for rlo, rhi in intervals:
            for t in (rlo, rhi):
                if lo + 1e-12 < t < hi - 1e-12:
                    out.append(t)
        return tuple(sorted(set(out)))

    gamma = interior_boundaries(lambda rlo, rhi, lab: lab == REGION_ZERO)
    # {u = psi} = contact regions plus zero regions where psi vanishes
    gamma_psi = interior_boundaries(
        lambda rlo, rhi, lab: lab == REGION_CONTACT
        or (lab == REGION_ZERO and abs(float(psi(np.array([0.5 * (rlo + rhi)]))[0])) < 1e-12)
    )
    return ExactSolution1D(u, regions, gamma, gamma_psi)
