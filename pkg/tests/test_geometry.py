import numpy as np
import pytest

from obstlab.geometry import convex_hull, min_width, min_width_bruteforce


class TestConvexHull:
    def test_square(self):
        pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5], [0.2, 0.7]])
        hull = convex_hull(pts)
        assert len(hull) == 4
        assert {tuple(p) for p in hull} == {(0, 0), (1, 0), (1, 1), (0, 1)}

    def test_collinear_collapses(self):
        pts = np.stack([np.linspace(0, 1, 7), np.linspace(0, 2, 7)], axis=1)
        hull = convex_hull(pts)
        assert len(hull) == 2

    def test_containment_random(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(200, 2))
        hull = convex_hull(pts)
        # every input point lies inside or on the hull (ccw cross test)
        for k in range(len(hull)):
            a, b = hull[k], hull[(k + 1) % len(hull)]
            s = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
            assert np.min(s) > -1e-9


class TestMinWidth:
    def test_anchors(self):
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])
        assert min_width(square) == pytest.approx(1.0, abs=1e-12)
        rect = np.array([[0, 0], [3, 0], [3, 0.25], [0, 0.25]])
        assert min_width(rect) == pytest.approx(0.25, abs=1e-12)
        assert min_width(np.array([[0.0, 0.0]])) == 0.0
        assert min_width(np.array([[0, 0], [1, 1]])) == 0.0
        segment = np.stack([np.linspace(0, 1, 9), np.zeros(9)], axis=1)
        assert min_width(segment) == 0.0

    def test_rotated_rectangle(self):
        rng = np.random.default_rng(1)
        theta = rng.uniform(0, np.pi)
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        rect = np.array([[0, 0], [3, 0], [3, 0.25], [0, 0.25]]) @ R.T
        assert min_width(rect) == pytest.approx(0.25, abs=1e-10)

    def test_half_disk_lattice(self):
        # nodes of a fine lattice in a half disk: width ~ r against the flat side
        h = 1 / 128
        ax = np.arange(-1, 1 + h / 2, h)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        r = 0.3
        keep = (X**2 + Y**2 <= r**2) & (X <= 0)
        pts = np.stack([X[keep], Y[keep]], axis=1)
        assert min_width(pts) == pytest.approx(r, abs=2 * h)

    @pytest.mark.parametrize("seed", range(12))
    def test_calipers_agree_with_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n = rng.integers(3, 120)
        pts = rng.normal(size=(int(n), 2)) * rng.uniform(0.1, 5)
        assert min_width(pts) == pytest.approx(min_width_bruteforce(pts), rel=1e-12, abs=1e-12)

    def test_calipers_agree_on_lattice_sets(self):
        h = 1 / 64
        ax = np.arange(-0.5, 0.5 + h / 2, h)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        keep = X + 0.3 * Y**2 <= 0.1
        pts = np.stack([X[keep], Y[keep]], axis=1)
        assert min_width(pts) == pytest.approx(min_width_bruteforce(pts), rel=1e-12)
