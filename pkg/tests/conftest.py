import math

import numpy as np
import pytest

from thetamfg import Grid, LocalCoupling, ProblemSpec, QuadraticCost, cfl_time_steps
from thetamfg.problem import parse_expression


def make_problem(d=1, alpha=10.0, terminal="cos_sum", initial="uniform", coupling=None, L_f=1.0, drift=0.0):
    coupling = coupling or LocalCoupling(lambda rho: rho, name="identity")
    return ProblemSpec(
        running_cost=QuadraticCost(alpha=alpha, drift=drift),
        coupling=coupling,
        terminal=parse_expression(terminal, d),
        initial=parse_expression(initial, d),
        L_ell=0.0,
        L_f=L_f,
        L_g=2 * math.pi * math.sqrt(d) if terminal == "cos_sum" else 0.0,
    )


def cfl_grid(N, d=1, theta=0.75, sigma=0.2):
    return Grid(d=d, N=N, T=cfl_time_steps(N, d, theta, sigma), theta=theta, sigma=sigma)


@pytest.fixture
def acceptance_problem():
    return make_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def bump_curve(grid, center=0.3, width=0.1):
    """A non-uniform probability curve, distinct from every built-in start."""
    from thetamfg.grid import restrict

    bump = restrict(parse_expression(f"gaussian_bump({center}, {width})", grid.d), grid)
    bump /= bump.sum()
    return np.broadcast_to(bump, (grid.T + 1,) + grid.shape).copy()
