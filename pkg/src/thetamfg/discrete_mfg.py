"""Kernel form of the scheme as a discrete mean field game.

The transition kernel is affine in the control,
``pi(x, y) = pi0(x, y) + dt <pi1(x, y), v(x)>``, with ``x`` the current node
and ``y`` the next one. Kernels are dense ``N^d x N^d`` matrices over
row-major flattened nodes, so this module is meant for small grids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Grid, laplacian
from .heat import HeatSolveOptions, solve_b1
from .problem import ProblemSpec, control_bound, hamiltonian

__all__ = [
    "MAX_DENSE_NODES",
    "TransitionModel",
    "PerturbedSolution",
    "build_transition",
    "kolmogorov_roll",
    "dp_roll",
    "fundamental_gap",
    "sum_by_parts_defect",
]

MAX_DENSE_NODES = 4096


@dataclass(frozen=True)
class TransitionModel:
    grid: Grid
    pi0: np.ndarray  # (n, n), time independent
    pi1: np.ndarray  # (d, n, n)
    control_bound: float
    b1_inverse: np.ndarray  # (n, n)

    def row_sum_defects(self) -> tuple[float, float]:
        """Worst deviation of pi0 rows from 1 and of pi1 rows from 0."""
        e0 = float(np.max(np.abs(self.pi0.sum(axis=1) - 1.0)))
        e1 = float(np.max(np.abs(self.pi1.sum(axis=2))))
        return e0, e1

    def dominance_defect(self) -> float:
        """``max(dt D |pi1| - pi0)``; nonpositive when the kernel is admissible."""
        norm1 = np.sqrt(np.sum(self.pi1**2, axis=0))
        return float(np.max(self.grid.dt * self.control_bound * norm1 - self.pi0))

    def kernel(self, v_t: np.ndarray) -> np.ndarray:
        """Full transition matrix for controls ``v_t`` of shape ``(d,) + space``."""
        vf = v_t.reshape(self.grid.d, -1)
        return self.pi0 + self.grid.dt * np.einsum("ixy,ix->xy", self.pi1, vf)


@dataclass
class PerturbedSolution:
    u: np.ndarray
    v: np.ndarray
    m: np.ndarray
    eta: np.ndarray  # added to u(t), shape (T,) + space
    delta: np.ndarray  # added to m(t + 1), shape (T,) + space
    residual: float = float("nan")
    iterations: int = 0
    converged: bool = True


def build_transition(
    grid: Grid,
    spec: Optional[ProblemSpec] = None,
    control: Optional[float] = None,
    heat: Optional[HeatSolveOptions] = None,
) -> TransitionModel:
    """Dense kernels of the theta-scheme.

    ``control`` overrides the bound ``D``; otherwise it is ``M`` from ``spec``.
    """
    n = grid.n_nodes
    if n > MAX_DENSE_NODES:
        raise ValueError(f"dense kernels need N^d <= {MAX_DENSE_NODES}, got {n}")
    if control is None:
        if spec is None:
            raise ValueError("either spec or control must be given")
        control = control_bound(spec, grid)
    implicit = grid.theta * grid.sigma
    explicit = (1 - grid.theta) * grid.sigma

    # column j of B1^{-1} is the solve against the j-th unit vector
    b1inv = np.empty((n, n))
    unit = np.zeros(n)
    for j in range(n):
        unit[j] = 1.0
        b1inv[:, j] = solve_b1(unit.reshape(grid.shape), implicit, grid, heat).ravel()
        unit[j] = 0.0
    b2 = np.empty((n, n))
    for j in range(n):
        unit[j] = 1.0
        b2[:, j] = explicit * laplacian(unit.reshape(grid.shape), grid.h).ravel()
        unit[j] = 0.0

    pi0 = (b1inv + grid.dt * b1inv @ b2).T
    # pi1[i][x, y] = (B1^{-1}(y, x + h e_i) - B1^{-1}(y, x - h e_i)) / 2h
    bt = b1inv.T.reshape(grid.shape + (n,))
    pi1 = np.stack(
        [
            ((np.roll(bt, -1, axis=i) - np.roll(bt, 1, axis=i)) / (2 * grid.h)).reshape(n, n)
            for i in range(grid.d)
        ]
    )
    return TransitionModel(grid=grid, pi0=pi0, pi1=pi1, control_bound=float(control), b1_inverse=b1inv)


def kolmogorov_roll(
    model: TransitionModel,
    v: np.ndarray,
    m0: np.ndarray,
    delta: Optional[np.ndarray] = None,
    tol: float = 1e-9,
) -> np.ndarray:
    """``m(t + 1, y) = sum_x pi[v](t, x, y) m(t, x)`` (plus ``delta(t, y)``)."""
    grid = model.grid
    v = np.asarray(v, dtype=float)
    speed = np.sqrt(np.sum(v**2, axis=1))
    if np.max(speed) > model.control_bound + tol:
        raise ValueError(f"controls exceed the bound {model.control_bound:.6g}: max {np.max(speed):.6g}")
    n = grid.n_nodes
    m = np.empty((grid.T + 1, n))
    m[0] = np.asarray(m0, dtype=float).ravel()
    for t in range(grid.T):
        flux = v[t].reshape(grid.d, n) * m[t]
        m[t + 1] = m[t] @ model.pi0 + grid.dt * np.einsum("ix,ixy->y", flux, model.pi1)
        if delta is not None:
            m[t + 1] += delta[t].ravel()
    return m.reshape((grid.T + 1,) + grid.shape)


def dp_roll(
    model: TransitionModel,
    m: np.ndarray,
    spec: ProblemSpec,
    eta: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Dynamic programming in kernel form; returns ``(u, v)``."""
    grid = model.grid
    x = grid.coords
    u = np.empty((grid.T + 1,) + grid.shape)
    v = np.empty((grid.T, grid.d) + grid.shape)
    u[grid.T] = spec.terminal_values(grid)
    for t in range(grid.T - 1, -1, -1):
        nxt = u[t + 1].ravel()
        p0 = (model.pi0 @ nxt).reshape(grid.shape)
        p1 = (model.pi1 @ nxt).reshape((grid.d,) + grid.shape)
        ev = hamiltonian(spec.running_cost, t * grid.dt, x, p1, model.control_bound)
        u[t] = grid.dt * (spec.coupling(grid, t, m[t]) - ev.value) + p0
        if eta is not None:
            u[t] += eta[t]
        v[t] = ev.control
    return u, v


def sum_by_parts_defect(model: TransitionModel, u: np.ndarray, v: np.ndarray, m: np.ndarray) -> float:
    """Worst ``|sum p0 m + dt <p1, m v> - sum u(t+1) m(t+1)|`` over ``t`` for a solved triple."""
    grid = model.grid
    worst = 0.0
    for t in range(grid.T):
        nxt = u[t + 1].ravel()
        mt = m[t].ravel()
        p0 = model.pi0 @ nxt
        p1 = model.pi1 @ nxt
        lhs = p0 @ mt + grid.dt * np.sum(p1 * v[t].reshape(grid.d, -1) * mt)
        worst = max(worst, abs(lhs - nxt @ m[t + 1].ravel()))
    return worst


def fundamental_gap(exact, perturbed: PerturbedSolution, grid: Grid, spec: ProblemSpec, tol: float = 1e-12) -> dict:
    """Both sides of the fundamental inequality.

    ``exact`` is any object with ``u``, ``v`` and ``m`` attributes solving the
    unperturbed system. Raises if the perturbed density is negative.
    """
    if np.min(perturbed.m) < -tol:
        raise ValueError(f"perturbed density is negative (min {np.min(perturbed.m):.3e})")
    T = grid.T
    dv2 = np.sum((perturbed.v - exact.v) ** 2, axis=1)
    lhs = 0.5 * grid.dt * spec.alpha * float(np.sum(dv2 * (perturbed.m[:T] + exact.m[:T])))
    rhs = float(
        np.sum((perturbed.u[1:] - exact.u[1:]) * perturbed.delta)
        + np.sum((exact.m[:T] - perturbed.m[:T]) * perturbed.eta)
    )
    return {"lhs": lhs, "rhs": rhs, "margin": rhs - lhs}
