"""Shared fixtures: the curved-boundary reference instance at three spacings.

The instance: box [-1, 1]^2, upper obstacle (x1+)^2 (a = 2), source
f = 1 + 0.75 x2^2 (so the zero-set boundary bends and nothing is exactly
homogeneous), boundary data from the half-space profile, c = 0.25.
"""

from __future__ import annotations

import numpy as np
import pytest

from obstlab import Grid, Problem, SolverConfig, sample, solve
from obstlab import exact


GAMMA_COEFF = 0.75  # transverse source curvature


def make_fixture_problem(m: int, gamma: float = GAMMA_COEFF) -> Problem:
    g = Grid.from_box([-1, -1], [1, 1], [m, m])
    f = sample(g, exact.quadratic(1.0, (0, 0), ((0, 0), (0, 2 * gamma))))
    psi = sample(g, exact.model_psi(2.0, (1, 0)))
    bc = sample(g, exact.halfspace(1.0, (1, 0)))
    return Problem(g, f, psi, c=0.25, a=2.0, dirichlet=bc)


def near_optimal_omega(m: int) -> float:
    return 2.0 / (1.0 + np.sin(np.pi / (m - 1)))


def solve_fixture(m: int):
    p = make_fixture_problem(m)
    cfg = SolverConfig(omega=near_optimal_omega(m), tol=1e-10)
    u, mask, rep = solve(p, cfg)
    return p, u, mask, rep


@pytest.fixture(scope="session")
def solved_64():
    return solve_fixture(129)


@pytest.fixture(scope="session")
def solved_128():
    return solve_fixture(257)


@pytest.fixture(scope="session")
def solved_256():
    return solve_fixture(513)
