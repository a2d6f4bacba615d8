import numpy as np
import pytest

from obstlab import (
    CONTACT,
    OPEN,
    ZERO,
    FreeBoundaryCurve,
    Grid,
    NotAGraphError,
    PartitionMask,
    Problem,
    ScalarField,
    SolverConfig,
    c1_diagnostic,
    classify,
    default_eps_mask,
    extract,
    gamma_d_events,
    lipschitz_fit,
    normals,
    sample,
    solve,
)
from obstlab import exact
from obstlab.freeboundary import GAMMA, GAMMA_PSI
from conftest import near_optimal_omega


def big_obstacle(g):
    return sample(g, exact.quadratic(1.0, (0, 0), ((1.0, 0), (0, 1.0))))


def problem_for(g, u):
    return Problem(g, sample(g, exact.constant(1.0)), big_obstacle(g), c=1.0, a=2.0, dirichlet=u)


def mask_for(g, u):
    p = problem_for(g, u)
    return classify(u, p, default_eps_mask(g.h, 2.0))


def synthetic_line_curve(h=0.05, n=21):
    pts = np.stack([np.zeros(n), np.linspace(-0.5, 0.5, n)], axis=1)
    nrm = np.tile([1.0, 0.0], (n, 1))
    return FreeBoundaryCurve(GAMMA, pts, nrm, False, h=h)


class TestExtract:
    def test_halfspace_single_straight_curve(self):
        g = Grid.from_box([-1, -1], [1, 1], [129, 129])
        u = sample(g, exact.halfspace(1.0, (1, 0)))
        curves = extract(u, mask_for(g, u), GAMMA)
        assert len(curves) == 1
        assert np.max(np.abs(curves[0].points[:, 0])) <= 0.1 * g.h

    def test_zero_field_empty(self):
        g = Grid.from_box([-1, -1], [1, 1], [65, 65])
        u = sample(g, exact.zero())
        assert extract(u, mask_for(g, u), GAMMA) == []

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
    def test_sub_grid_offset_recovery(self, alpha):
        g = Grid.from_box([-1, -1], [1, 1], [129, 129])
        off = alpha * g.h
        u = sample(g, lambda p: 0.5 * np.maximum(p[..., 0] - off, 0.0) ** 2)
        curves = extract(u, mask_for(g, u), GAMMA)
        assert np.max(np.abs(curves[0].points[:, 0] - off)) <= 0.1 * g.h

    def test_extrusion_matches_1d_oracle(self):
        # f, psi depending on x1 only: the 2D solve extrudes the 1D solution
        m = 129
        g = Grid.from_box([-1, -1], [1, 1], [m, m])
        prof = exact.PiecewiseQuadratic1D.model(-1, 1, a=2.0)
        psi = sample(g, exact.piecewise_1d(prof, e=(1, 0)))
        sol = exact.solve_1d_exact(1.0, 2.0, (-1, 1), prof, (0.0, 0.6))
        bc = sample(g, lambda p: np.asarray(sol.u(p[..., 0])) * np.ones(p.shape[:-1]))
        p = Problem(g, sample(g, exact.constant(1.0)), psi, c=1.0, a=2.0, dirichlet=bc)
        u, mask, _ = solve(p, SolverConfig(omega=near_optimal_omega(m), tol=1e-12))
        h = g.h

        gcur = extract(u, mask, GAMMA)
        assert len(gcur) == 1
        xs = gcur[0].points[:, 0]
        assert np.ptp(xs) <= h  # vertical within h
        assert np.max(np.abs(xs - sol.gamma[-1])) <= 2 * h

        # {u = psi} includes the squeezed strip, so its boundary is the
        # single contact-exit line
        pcur = extract(u, mask, GAMMA_PSI, psi=p.psi)
        assert len(pcur) == 1
        assert sol.gamma_psi == pytest.approx((1 - np.sqrt(0.8),), abs=1e-10)
        assert np.max(np.abs(pcur[0].points[:, 0] - sol.gamma_psi[0])) <= 2 * h
        assert np.ptp(pcur[0].points[:, 0]) <= h

        # the two boundaries are 0.1 apart here: no meeting points
        assert gamma_d_events(gcur, pcur, h) == []

    def test_gamma_d_events_at_model_junction(self):
        # half-space solution under the model obstacle: the zero-set
        # boundary and the contact-set boundary coincide on {x1 = 0}
        g = Grid.from_box([-1, -1], [1, 1], [129, 129])
        u = sample(g, exact.halfspace(1.0, (1, 0)))
        psi = sample(g, exact.model_psi(2.0, (1, 0)))
        p = Problem(g, sample(g, exact.constant(1.0)), psi, c=1.0, a=2.0, dirichlet=u)
        mask = classify(u, p, default_eps_mask(g.h, 2.0))
        gcur = extract(u, mask, GAMMA)
        pcur = extract(u, mask, GAMMA_PSI, psi=psi)
        assert len(gcur) == 1 and len(pcur) == 1
        assert np.max(np.abs(pcur[0].points[:, 0])) <= 0.1 * g.h
        events = gamma_d_events(gcur, pcur, g.h)
        assert len(events) >= len(gcur[0].points)

    def test_consistency_with_label_changes(self, solved_128):
        p, u, mask, _ = solved_128
        h = p.grid.h
        curves = extract(u, mask, GAMMA)
        z = mask.labels == ZERO
        chg = (
            (z[:-1, :-1] != z[1:, :-1])
            | (z[:-1, :-1] != z[:-1, 1:])
            | (z[1:, 1:] != z[1:, :-1])
            | (z[1:, 1:] != z[:-1, 1:])
        )
        centers = p.grid.lo + h * (np.argwhere(chg) + 0.5)
        allpts = np.vstack([c.points for c in curves])
        # every curve point within one cell of a label change
        d = np.min(np.linalg.norm(allpts[:, None, :] - centers[None, :, :], axis=-1), axis=1)
        assert np.max(d) <= np.sqrt(2) * h
        # every label-change cell well inside the box is near a curve point
        inner = np.all(np.abs(centers) <= 0.8, axis=1)
        d2 = np.min(np.linalg.norm(centers[inner][:, None, :] - allpts[None, :, :], axis=-1), axis=1)
        assert np.max(d2) <= 2 * h

    def test_gamma_psi_requires_obstacle(self):
        g = Grid.from_box([-1, -1], [1, 1], [65, 65])
        u = sample(g, exact.halfspace(1.0, (1, 0)))
        with pytest.raises(ValueError, match="obstacle"):
            extract(u, mask_for(g, u), GAMMA_PSI)


class TestNormals:
    def test_straight_line_equal(self):
        cur = synthetic_line_curve()
        N = normals(cur, window=3)
        assert np.max(np.linalg.norm(N - N[0], axis=1)) < 1e-8

    def test_circle_radial(self):
        R = 0.4
        h = 1 / 128
        theta = np.arange(0, 2 * np.pi, h / R)
        pts = R * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        nrm = np.tile([1.0, 0.0], (len(pts), 1))
        cur = FreeBoundaryCurve(GAMMA, pts, nrm, True, h=h)
        N = normals(cur, window=4)
        align = np.abs(np.sum(N * pts / R, axis=1))
        assert np.min(align) >= 1 - 5 * (h / R) ** 2 - 1e-6

    def test_degenerate_window_errors(self):
        pts = np.array([[0.0, 0.0], [0.0, 0.05]])
        nrm = np.tile([1.0, 0.0], (2, 1))
        cur = FreeBoundaryCurve(GAMMA, pts, nrm, False, h=0.05)
        with pytest.raises(ValueError, match="window"):
            normals(cur, window=1)


class TestLipschitzFit:
    def test_vertical_line_constant_zero(self):
        cur = synthetic_line_curve()
        fit = lipschitz_fit(cur, (0, 0), (1, 0), 0.4)
        assert fit.lipschitz_constant <= 1e-8
        assert fit.residual <= 1e-8

    def test_diagonal_line_slope_one(self):
        # a 45-degree line read as a graph with value axis e1: slope 1
        t = np.linspace(-0.4, 0.4, 31)
        pts = np.stack([t, t], axis=1)
        nrm = np.tile([-1.0, 1.0] / np.sqrt(2), (31, 1))
        cur = FreeBoundaryCurve(GAMMA, pts, nrm, False, h=0.05)
        fit = lipschitz_fit(cur, (0, 0), (1, 0), 0.6)
        assert fit.lipschitz_constant == pytest.approx(1.0, abs=1e-6)

    def test_not_a_graph(self):
        # a U-shaped curve: two branches share abscissas with a value gap
        left = np.array([[0.0, y] for y in (0.2, 0.1, 0.0, -0.1, -0.2)])
        turn = np.array([[0.15, -0.3]])
        right = np.array([[0.3, y] for y in (-0.2, -0.1, 0.0, 0.1, 0.2)])
        pts = np.vstack([left, turn, right])
        nrm = np.tile([1.0, 0.0], (len(pts), 1))
        cur = FreeBoundaryCurve(GAMMA, pts, nrm, False, h=0.11)
        with pytest.raises(NotAGraphError):
            lipschitz_fit(cur, (0.15, 0), (1, 0), 0.6)

    def test_frame_covariance(self):
        rng = np.random.default_rng(3)
        t = np.linspace(-0.4, 0.4, 41)
        pts = np.stack([0.2 * t**2, t], axis=1)
        nrm = np.tile([1.0, 0.0], (41, 1))
        cur = FreeBoundaryCurve(GAMMA, pts, nrm, False, h=0.03)
        fit0 = lipschitz_fit(cur, (0, 0), (1, 0), 0.5)
        phi = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
        cur_rot = FreeBoundaryCurve(GAMMA, pts @ R.T, nrm @ R.T, False, h=0.03)
        fit1 = lipschitz_fit(cur_rot, (0, 0), R @ np.array([1.0, 0.0]), 0.5)
        assert fit1.lipschitz_constant == pytest.approx(fit0.lipschitz_constant, abs=1e-6)

    def test_needs_five_points(self):
        cur = synthetic_line_curve(n=21)
        with pytest.raises(ValueError, match="5"):
            lipschitz_fit(cur, (0, 0), (1, 0), 0.05)

    def test_solved_fixture_slope_within_cone(self, solved_128):
        # blowup direction e1: the boundary graph steepens like 1.5 x2, so
        # radius delta/1.5 keeps the Lipschitz constant below delta
        p, u, mask, _ = solved_128
        c0 = extract(u, mask, GAMMA)[0]
        x0 = c0.points[np.argmin(np.linalg.norm(c0.points, axis=1))]
        for delta in (1.0, 0.5, 0.25):
            r = min(0.45, delta / 1.5)
            fit = lipschitz_fit(c0, x0, (1, 0), r)
            assert fit.lipschitz_constant <= delta


class TestC1Diagnostic:
    def test_straight_line_zero(self):
        cur = synthetic_line_curve(n=41)
        osc = c1_diagnostic(cur, (0, 0), [0.3, 0.2, 0.1], window=4)
        assert all(o == 0.0 for _, o in osc)

    def test_circle_linear_decay(self):
        R = 0.4
        h = 1 / 256
        theta = np.arange(0, 2 * np.pi, h / R)
        pts = R * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        nrm = pts / R
        cur = FreeBoundaryCurve(GAMMA, pts, nrm, True, h=h)
        x0 = np.array([R, 0.0])
        osc = c1_diagnostic(cur, x0, [0.3, 0.2, 0.1])
        for r, o in osc:
            # chord geometry: max angle between normals in the ball is
            # 2 (r/R) up to curvature corrections
            assert o == pytest.approx(2 * r / R, rel=0.15)
        vals = [o for _, o in osc]
        assert vals[0] > vals[1] > vals[2]

    def test_corner_refuses_c1(self):
        # two rays at a right angle: oscillation pinned at pi/2
        h = 0.01
        t = np.arange(0.5, h / 2, -h)
        left = np.stack([-t, t], axis=1)  # walks toward the corner
        t2 = np.arange(h, 0.5, h)
        right = np.stack([t2, t2], axis=1)
        pts = np.vstack([left, [[0, 0]], right])
        # chain-consistent normals: rotate each tangent by +90 degrees
        nrm = np.zeros_like(pts)
        nrm[: len(left)] = [1, 1] / np.sqrt(2)
        nrm[len(left) :] = [-1, 1] / np.sqrt(2)
        cur = FreeBoundaryCurve(GAMMA, pts, nrm, False, h=h)
        osc = c1_diagnostic(cur, (0, 0), [0.3, 0.2, 0.1, 0.05])
        vals = [o for _, o in osc]
        assert all(v >= np.pi / 2 - 1e-9 for v in vals)
        assert not all(b < a for a, b in zip(vals, vals[1:]))

    def test_solved_fixture_decreasing(self, solved_128):
        p, u, mask, _ = solved_128
        c0 = extract(u, mask, GAMMA)[0]
        x0 = c0.points[np.argmin(np.linalg.norm(c0.points, axis=1))]
        osc = c1_diagnostic(c0, x0, [0.3, 0.2, 0.1, 0.05], window=8)
        vals = [o for _, o in osc]
        assert all(b < a for a, b in zip(vals, vals[1:]))
