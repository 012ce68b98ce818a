"""Backward HJB and forward Fokker-Planck passes of the theta-scheme.

Space-time arrays carry time on axis 0: ``u`` and ``m`` have ``T + 1`` slices,
controls ``v`` have shape ``(T, d) + space``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .grid import Grid, divergence, gradient, laplacian
from .heat import HeatSolveOptions, solve_b1
from .problem import ProblemSpec, control_bound, hamiltonian

__all__ = [
    "HjbResult",
    "FpPerturbation",
    "hjb_backward",
    "fp_forward",
    "explicit_fp_step",
    "stencil_coefficients",
    "fp_diagnostics",
    "write_diagnostics_csv",
]


@dataclass
class HjbResult:
    u: np.ndarray  # (T + 1,) + space
    u_half: np.ndarray  # (T,) + space, u(t + 1/2)
    v: np.ndarray  # (T, d) + space
    truncation: float = math.inf
    active_truncation: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n_active(self) -> int:
        return int(np.sum(self.active_truncation))


@dataclass
class FpPerturbation:
    """Source terms of the perturbed forward equation.

    ``delta_v`` (shape ``(T, d) + space``) and ``delta`` (``(T,) + space``)
    enter the explicit half-step as ``-dt div(delta_v) + dt delta``. ``jump``
    (``(T,) + space``) is added to ``m(t + 1)`` after the implicit half-step,
    which is the perturbation of the kernel-form Kolmogorov equation.
    """

    delta_v: Optional[np.ndarray] = None
    delta: Optional[np.ndarray] = None
    jump: Optional[np.ndarray] = None

    def validate(self, grid: Grid) -> None:
        space = grid.shape
        expected = {
            "delta_v": (grid.T, grid.d) + space,
            "delta": (grid.T,) + space,
            "jump": (grid.T,) + space,
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr is not None and np.shape(arr) != shape:
                raise ValueError(f"{name} has shape {np.shape(arr)}, expected {shape}")

    @property
    def is_zero(self) -> bool:
        return all(a is None or not np.any(a) for a in (self.delta_v, self.delta, self.jump))


def hjb_backward(
    m: np.ndarray,
    spec: ProblemSpec,
    grid: Grid,
    D: Optional[float] = None,
    heat: Optional[HeatSolveOptions] = None,
    eta: Optional[np.ndarray] = None,
) -> HjbResult:
    """Backward pass for a given density curve.

    ``D`` defaults to the control bound ``M``; pass ``math.inf`` for the
    untruncated Hamiltonian. ``eta`` (shape ``(T,) + space``) is an additive
    source on ``u(t)``.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (grid.T + 1,) + grid.shape:
        raise ValueError(f"m has shape {m.shape}, expected {(grid.T + 1,) + grid.shape}")
    if D is None:
        D = control_bound(spec, grid)
    h, dt = grid.h, grid.dt
    explicit = (1 - grid.theta) * grid.sigma * dt
    implicit = grid.theta * grid.sigma
    x = grid.coords

    u = np.empty((grid.T + 1,) + grid.shape)
    u_half = np.empty((grid.T,) + grid.shape)
    v = np.empty((grid.T, grid.d) + grid.shape)
    active = np.zeros(grid.T, dtype=int)
    u[grid.T] = spec.terminal_values(grid)
    for t in range(grid.T - 1, -1, -1):
        uh = solve_b1(u[t + 1], implicit, grid, heat)
        ev = hamiltonian(spec.running_cost, t * dt, x, gradient(uh, h), D)
        f = spec.coupling(grid, t, m[t])
        u[t] = dt * (f - ev.value) + uh + explicit * laplacian(uh, h)
        if eta is not None:
            u[t] += eta[t]
        u_half[t] = uh
        v[t] = ev.control
        active[t] = ev.n_active
    return HjbResult(u=u, u_half=u_half, v=v, truncation=D, active_truncation=active)


def stencil_coefficients(v_t: np.ndarray, grid: Grid) -> tuple[float, np.ndarray, np.ndarray]:
    """Weights of the explicit half-step written as a combination of ``m``.

    Returns ``(center, from_below, from_above)``: ``from_below[i]`` multiplies
    ``m(x - h e_i)`` and ``from_above[i]`` multiplies ``m(x + h e_i)``, both
    evaluated at ``x`` and already scaled by ``dt``. All are nonnegative under
    the CFL condition.
    """
    h, dt = grid.h, grid.dt
    a = (1 - grid.theta) * grid.sigma / h**2
    center = 1 - 2 * grid.d * a * dt
    below = np.stack([dt * (a + np.roll(v_t[i], 1, axis=i) / (2 * h)) for i in range(grid.d)])
    above = np.stack([dt * (a - np.roll(v_t[i], -1, axis=i) / (2 * h)) for i in range(grid.d)])
    return center, below, above


def explicit_fp_step(m_t: np.ndarray, v_t: np.ndarray, grid: Grid) -> np.ndarray:
    center, below, above = stencil_coefficients(v_t, grid)
    out = center * m_t
    for i in range(grid.d):
        out = out + below[i] * np.roll(m_t, 1, axis=i) + above[i] * np.roll(m_t, -1, axis=i)
    return out


def fp_forward(
    v: np.ndarray,
    m0: np.ndarray,
    grid: Grid,
    pert: Optional[FpPerturbation] = None,
    heat: Optional[HeatSolveOptions] = None,
) -> np.ndarray:
    """Forward pass: explicit half-step in stencil form, then the implicit solve."""
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.T, grid.d) + grid.shape:
        raise ValueError(f"v has shape {v.shape}, expected {(grid.T, grid.d) + grid.shape}")
    if pert is not None:
        pert.validate(grid)
    implicit = grid.theta * grid.sigma
    m = np.empty((grid.T + 1,) + grid.shape)
    m[0] = m0
    for t in range(grid.T):
        half = explicit_fp_step(m[t], v[t], grid)
        if pert is not None:
            if pert.delta_v is not None:
                half -= grid.dt * divergence(pert.delta_v[t], grid.h)
            if pert.delta is not None:
                half += grid.dt * pert.delta[t]
        m[t + 1] = solve_b1(half, implicit, grid, heat)
        if pert is not None and pert.jump is not None:
            m[t + 1] += pert.jump[t]
    return m


def fp_diagnostics(m: np.ndarray, v: np.ndarray, active: Optional[np.ndarray] = None) -> np.ndarray:
    """Rows ``(t, mass, min_m, max_abs_v, active_truncation)`` for each slice of ``m``.

    ``v`` and ``active`` have one fewer slice; the final row reports zeros.
    """
    T = m.shape[0] - 1
    rows = np.zeros((T + 1, 5))
    flat = m.reshape(T + 1, -1)
    rows[:, 0] = np.arange(T + 1)
    rows[:, 1] = flat.sum(axis=1)
    rows[:, 2] = flat.min(axis=1)
    speed = np.sqrt(np.sum(v**2, axis=1)).reshape(T, -1).max(axis=1)
    rows[:T, 3] = speed
    if active is not None:
        rows[:T, 4] = active
    return rows


def write_diagnostics_csv(path: str | Path, rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "mass", "min_m", "max_abs_v", "active_truncation"])
        for r in rows:
            writer.writerow([int(r[0]), format(r[1], ".17g"), format(r[2], ".17g"), format(r[3], ".17g"), int(r[4])])
