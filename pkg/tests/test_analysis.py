import numpy as np
import pytest

from obstlab import (
    CONTACT,
    OPEN,
    ZERO,
    DomainError,
    Grid,
    PartitionMask,
    ScalarField,
    acf,
    acf_series,
    blowup_study,
    classify,
    default_eps_mask,
    directional_check,
    gradient,
    nondegeneracy_check,
    rescale,
    sample,
    thickness,
    weiss,
    weiss_derivative_check,
    weiss_series,
    zero_set_points,
)
from obstlab import exact
from obstlab.analysis import VERDICT_HIGH, VERDICT_LOW, FunctionalSeries, fit_halfspace
from conftest import make_fixture_problem


@pytest.fixture(scope="module")
def g256():
    return Grid.from_box([-1, -1], [1, 1], [513, 513])


@pytest.fixture(scope="module")
def g128():
    return Grid.from_box([-1, -1], [1, 1], [257, 257])


def open_mask(g):
    return PartitionMask(g, np.full(g.dims, OPEN, dtype=np.int8), 0.0)


def halfspace_mask(g, a=2.0):
    u = sample(g, exact.halfspace(1.0, (1, 0)))
    psi = sample(g, exact.model_psi(a, (1, 0)))
    p_ = __import__("obstlab").Problem(
        g, sample(g, exact.constant(1.0)), psi, c=1.0, a=a, dirichlet=u
    )
    return u, psi, classify(u, p_, default_eps_mask(g.h, a))


def wallis_circle_power(n: int) -> float:
    """∮ cos^n over the full circle by the even-power recursion."""
    assert n % 2 == 0
    val = 2 * np.pi
    for k in range(2, n + 1, 2):
        val *= (k - 1) / k
    return val


class TestRescale:
    def test_halfspace_fixed_point(self, g128):
        u = sample(g128, exact.halfspace(1.0, (1, 0)))
        ref = Grid.from_box([-1, -1], [1, 1], [129, 129])
        for lam in (0.5, 0.25):
            resc = rescale(u, (0, 0), lam, ref)
            want = sample(ref, exact.halfspace(1.0, (1, 0)))
            assert np.max(np.abs(resc.values - want.values)) <= 4 * g128.h / lam

    def test_homogeneous_invariance(self, g128):
        u = sample(g128, lambda p: 0.5 * np.sum(p**2, axis=-1))
        ref = Grid.from_box([-0.5, -0.5], [0.5, 0.5], [65, 65])
        resc = rescale(u, (0, 0), 0.5, ref)
        want = sample(ref, lambda p: 0.5 * np.sum(p**2, axis=-1))
        assert np.max(np.abs(resc.values - want.values)) < 1e-8

    def test_cubic_term_shrinks_linearly(self, g256):
        u = sample(g256, lambda p: 0.5 * np.maximum(p[..., 0], 0) ** 2 + p[..., 0] ** 3)
        ref = Grid.from_box([-0.9, -0.9], [0.9, 0.9], [65, 65])
        lam = 0.1
        resc = rescale(u, (0, 0), lam, ref)
        hs = sample(ref, exact.halfspace(1.0, (1, 0)))
        dev = np.max(np.abs(resc.values - hs.values))
        # the cubic deviation scales by lam: max over the ref box of lam|x1|^3
        assert dev == pytest.approx(lam * 0.9**3, abs=5e-3)

    def test_floor_violation(self, g128):
        u = sample(g128, exact.zero())
        ref = Grid.from_box([-1, -1], [1, 1], [17, 17])
        with pytest.raises(DomainError):
            rescale(u, (0, 0), 2 * g128.h, ref)


class TestThickness:
    def test_halfplane(self, g128):
        _, _, mask = halfspace_mask(g128)
        for r in (0.1, 0.2, 0.4):
            assert thickness(mask, (0, 0), r) == pytest.approx(1.0, abs=2 * g128.h / r)

    def test_full_ball(self, g128):
        pts = g128.nodes().reshape(-1, 2)
        for r in (0.2, 0.4):
            assert thickness(pts, (0, 0), r, h=g128.h) == pytest.approx(2.0, abs=2 * g128.h / r)

    def test_segment_degenerate(self, g128):
        r = 0.2
        xs = np.arange(-r, r + 1e-12, g128.h)
        pts = np.stack([xs, np.zeros_like(xs)], axis=1)
        assert thickness(pts, (0, 0), r, h=g128.h) <= 2 * g128.h / r

    def test_empty_set(self, g128):
        assert thickness(np.zeros((0, 2)), (0, 0), 0.2) == 0.0

    def test_scaling_identity(self, g128):
        # delta_1 of the rescaled zero set equals delta_r of the original
        u = sample(g128, exact.halfspace(1.0, (1, 0)))
        _, _, mask = halfspace_mask(g128)
        for r in (0.25, 0.5):
            ref = Grid.from_box([-1.1, -1.1], [1.1, 1.1], [129, 129])
            resc = rescale(u, (0, 0), r, ref)
            pts = zero_set_points(resc, 1e-9)
            d1 = thickness(pts, (0, 0), 1.0, h=ref.h)
            dr = thickness(mask, (0, 0), r)
            assert abs(d1 - dr) <= 2 * g128.h / r


class TestWeiss:
    def test_zero_field(self, g128):
        u = sample(g128, exact.zero())
        mask = PartitionMask(g128, np.full(g128.dims, ZERO, dtype=np.int8), 0.0)
        assert weiss(u, mask, 2.0, (0, 0), 0.2) == 0.0

    def test_halfspace_value(self, g128):
        u, _, mask = halfspace_mask(g128)
        w = weiss(u, mask, 2.0, (0, 0), 0.2)
        assert w == pytest.approx(np.pi / 16, abs=2e-4)

    def test_model_psi_scales_by_a_squared(self, g128):
        a = 2.0
        psi = sample(g128, exact.model_psi(a, (1, 0)))
        labels = np.where(g128.nodes()[..., 0] > 0, CONTACT, ZERO).astype(np.int8)
        mask = PartitionMask(g128, labels, 0.0)
        w = weiss(psi, mask, a, (0, 0), 0.2)
        assert w == pytest.approx(a**2 * np.pi / 16, abs=a**2 * 2e-4)

    def test_series_constant_on_smooth_homogeneous(self, g256):
        u = sample(g256, lambda p: 0.5 * np.sum(p**2, axis=-1))
        ser = weiss_series(u, open_mask(g256), 2.0, (0, 0), np.linspace(0.1, 0.3, 5), f=2.0)
        assert np.ptp(ser.values) < 1e-4
        assert ser.values[0] == pytest.approx(np.pi / 2, abs=1e-4)

    def test_euler_identity_boundary_term(self, g128):
        # any sampled 2-homogeneous field: x . grad u - 2u = 0
        from obstlab import sphere_integral

        for form in (exact.halfspace(1.0, (0.6, 0.8)), lambda p: 0.5 * np.sum(p**2, axis=-1)):
            u = sample(g128, form)
            gv = gradient(u)
            rel = g128.nodes()
            integrand = ScalarField(
                g128, (np.sum(rel * gv.values, axis=-1) - 2 * u.values) ** 2, ring=1
            )
            for r in (0.1, 0.3):
                assert sphere_integral(integrand, (0, 0), r) <= 1e-6

    def test_derivative_rhs_for_cubic(self, g128):
        # u = x1^3: the boundary identity integrand is x1^3 itself, so
        # rhs = (2/r^6) r^7 ∮cos^6 = 2 r (5π/8) -> (5π/4) r
        u = sample(g128, lambda p: p[..., 0] ** 3)
        f_field = sample(g128, exact.affine(0.0, (6.0, 0.0)))  # true laplacian
        r = 0.2
        lhs, rhs = weiss_derivative_check(u, open_mask(g128), 2.0, (0, 0), r, 0.04, f=f_field)
        oracle = 2 * r * wallis_circle_power(6)
        assert wallis_circle_power(6) == pytest.approx(5 * np.pi / 8, rel=1e-12)
        assert rhs == pytest.approx(oracle, abs=5e-3)
        assert oracle == pytest.approx(5 * np.pi / 4 * r, rel=1e-12)

    def test_derivative_identity_on_homogeneous(self, g128):
        # 2-homogeneous solution of the normalized problem: both sides ~ 0
        u, _, mask = halfspace_mask(g128)
        lhs, rhs = weiss_derivative_check(u, mask, 2.0, (0, 0), 0.2, 0.04)
        assert abs(rhs) < 1e-6
        assert abs(lhs - rhs) <= 0.05 * (0.04**2 + g128.h) / 0.05

    def test_monotone_violation_annotation(self):
        ser = FunctionalSeries(np.array([0.1, 0.2, 0.3]), np.array([1.0, 0.7, 0.9]), "WEISS")
        assert ser.monotone_violation == pytest.approx(0.3)
        rows = ser.rows()
        assert rows[1][2] == pytest.approx(0.3)


class TestACF:
    def test_two_plane_value_two_resolutions(self):
        for m, tol in ((257, 2e-3), (513, 1e-3)):
            g = Grid.from_box([-1, -1], [1, 1], [m, m])
            vp = sample(g, lambda p: np.maximum(p[..., 0], 0.0))
            vm = sample(g, lambda p: np.maximum(-p[..., 0], 0.0))
            vals = [acf(vp, vm, r) for r in (0.1, 0.2, 0.3)]
            assert np.max(np.abs(np.asarray(vals) - np.pi**2 / 4)) < tol
            assert np.ptp(vals) < tol

    def test_one_sided_is_zero(self, g128):
        vp = sample(g128, lambda p: np.maximum(p[..., 0], 0.0))
        vm = sample(g128, exact.zero())
        assert acf(vp, vm, 0.2) == 0.0

    def test_halfspace_transverse_derivative_is_zero(self, g128):
        u = sample(g128, exact.halfspace(1.0, (1, 0)))
        ser = acf_series(u, (0, 1), [0.1, 0.2, 0.3])
        assert np.max(np.abs(ser.values)) < 1e-20

    def test_disjointness_enforced(self, g128):
        vp = sample(g128, exact.constant(1.0))
        with pytest.raises(ValueError, match="disjoint"):
            acf(vp, vp, 0.2)

    def test_negativity_enforced(self, g128):
        vm = sample(g128, exact.zero())
        bad = sample(g128, exact.affine(0.0, (1.0, 0.0)))
        with pytest.raises(ValueError, match="nonnegative"):
            acf(bad, vm, 0.2)

    def test_equality_case_structure(self, g128):
        # on the two-plane pair the series is flat and the one-sided parts
        # are genuine linear ramps: fitted slopes are positive
        vp = sample(g128, lambda p: np.maximum(p[..., 0], 0.0))
        vm = sample(g128, lambda p: np.maximum(-p[..., 0], 0.0))
        x = g128.nodes()[..., 0]
        kp = np.max(vp.values) / np.max(x)
        km = np.max(vm.values) / np.max(-x)
        assert kp > 0 and km > 0
        vals = [acf(vp, vm, r) for r in (0.1, 0.2, 0.3)]
        assert np.ptp(vals) < 2e-3


class TestNondegeneracy:
    def test_halfspace_margin_literal(self, g128):
        # sup over the circle of radius 0.3 is (0.3)^2/2 = 0.045; the
        # (c/8n) r^2 slack removes 0.005625
        u, _, mask = halfspace_mask(g128)
        rep = nondegeneracy_check(u, mask, 1.0, [(0.0, 0.0)], [0.3], M=1.0)
        assert rep["margins"][0]["margin"] == pytest.approx(0.039375, abs=1e-4)
        assert rep["pass"]

    def test_zero_field_has_no_admissible_centers(self, g128):
        u = sample(g128, exact.zero())
        mask = PartitionMask(g128, np.full(g128.dims, ZERO, dtype=np.int8), 0.0)
        rep = nondegeneracy_check(u, mask, 1.0, [(0.0, 0.0), (0.3, 0.3)], [0.1])
        assert rep["margins"] == []
        assert len(rep["skipped_centers"]) == 2

    def test_solved_fixture(self, solved_128):
        p, u, mask, rep = solved_128
        rng = np.random.default_rng(11)
        cand = mask.points_of(OPEN)
        cand = cand[np.all(np.abs(cand) <= 0.7, axis=1)]
        centers = cand[rng.choice(len(cand), size=25, replace=False)]
        out = nondegeneracy_check(u, mask, float(np.min(p.f.values)), centers, [0.05, 0.1, 0.2])
        assert out["pass"], out["min_margin"]


class TestDirectional:
    def test_halfspace_cone(self, g128):
        # C d_e u - u = t - t^2/2 >= 0 on [0, 1] for e = e1, and every cone
        # direction keeps d_e u >= 0
        u = sample(g128, exact.halfspace(1.0, (1, 0)))
        out = directional_check(u, 1.0, 1.0, (0, 0), 0.5)
        assert out["min_directional"] >= -1e-10
        assert out["min_drift"] >= -1e-10

    def test_interior_max_detected(self, g128):
        u = sample(g128, lambda p: 1.0 - np.sum(p**2, axis=-1) / 2)
        out = directional_check(u, 0.5, 1.0, (0, 0), 0.4)
        assert out["min_directional"] < 0
        w = np.asarray(out["min_directional_at"])
        assert np.linalg.norm(w) <= 0.4 + 1e-12

    def test_solved_fixture_near_boundary_point(self, solved_128):
        p, u, mask, rep = solved_128
        from obstlab import extract

        c0 = extract(u, mask)[0]
        x0 = c0.points[np.argmin(np.linalg.norm(c0.points, axis=1))]
        tol = rep.d2_sup * 2 * p.grid.h
        out = directional_check(u, 0.5, 2.0, x0, 0.25)
        assert out["min_directional"] >= -tol


class TestBlowup:
    def test_fit_recovers_halfspace(self, g128):
        rng = np.random.default_rng(5)
        theta = rng.uniform(0, 2 * np.pi)
        e = (np.cos(theta), np.sin(theta))
        u = sample(g128, exact.halfspace(1.0, e))
        study = blowup_study(u, (0, 0), [0.5, 0.25], a=2.0)
        assert study.verdict == VERDICT_LOW
        assert study.final.k == pytest.approx(1.0, abs=1e-2)
        assert np.linalg.norm(np.asarray(study.final.e) - np.asarray(e)) < 1e-2

    def test_model_psi_classified_high(self, g128):
        u = sample(g128, exact.model_psi(2.0, (1, 0)))
        study = blowup_study(u, (0, 0), [0.5, 0.25], a=2.0)
        assert study.verdict == VERDICT_HIGH
        assert study.final.k == pytest.approx(2.0, abs=1e-2)

    def test_lambda_floor(self, g128):
        u = sample(g128, exact.zero())
        with pytest.raises(DomainError):
            blowup_study(u, (0, 0), [2 * g128.h], a=2.0)

    def test_solved_fixture_distances_decrease(self, solved_256):
        p, u, mask, rep = solved_256
        from obstlab import extract

        c0 = extract(u, mask)[0]
        x0 = c0.points[np.argmin(np.linalg.norm(c0.points, axis=1))]
        study = blowup_study(u, x0, [0.5, 0.25, 0.125, 0.0625], a=p.a)
        d = study.distances
        assert np.all(np.diff(d) < 0)
        assert study.verdict == VERDICT_LOW


def test_weiss_series_on_solved_fixture(solved_128):
    p, u, mask, rep = solved_128
    from obstlab import extract

    c0 = extract(u, mask)[0]
    x0 = c0.points[np.argmin(np.linalg.norm(c0.points, axis=1))]
    ser = weiss_series(u, mask, p.a, x0, np.linspace(0.05, 0.4, 20))
    assert ser.monotone_violation <= 10 * p.grid.h
    lhs, rhs = weiss_derivative_check(u, mask, p.a, x0, 0.2, 0.04)
    assert abs(lhs - rhs) <= 0.05
