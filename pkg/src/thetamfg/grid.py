"""Periodic grid geometry and centered finite-difference operators on the torus.

Fields are plain numpy arrays. A scalar field on a ``d``-dimensional grid has
shape ``(N,) * d``; a vector field has shape ``(d,) + (N,) * d`` with the
component on the leading axis. Space-time fields add a leading time axis.
Periodic wrap is done with modular index arithmetic (``np.roll``), never ghost
cells, so the summation-by-parts identities hold to rounding.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "Grid",
    "laplacian",
    "gradient",
    "divergence",
    "forward_gradient",
    "restrict",
    "reconstruct",
    "lipschitz_seminorm",
    "norm_inf_1",
    "norm_inf_inf",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid on the unit torus.

    Parameters
    ----------
    d : spatial dimension.
    N : cells per axis, so ``h = 1/N``.
    T : number of time steps, so ``dt = 1/T``.
    theta : implicit weight of the diffusion term.
    sigma : diffusion coefficient.
    """

    d: int
    N: int
    T: int
    theta: float = 0.75
    sigma: float = 0.2

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        if self.N < 2:
            raise ValueError(f"N must be at least 2, got {self.N}")
        if self.T <= 1:
            raise ValueError(f"T must be > 1, got {self.T}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def dt(self) -> float:
        return 1.0 / self.T

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def n_nodes(self) -> int:
        return self.N**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(d, N, ..., N)``."""
        axes = [np.arange(self.N) * self.h] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def uniform(self) -> np.ndarray:
        """The uniform probability distribution on the nodes."""
        return np.full(self.shape, 1.0 / self.n_nodes)

    def replace(self, **changes) -> "Grid":
        fields = dict(d=self.d, N=self.N, T=self.T, theta=self.theta, sigma=self.sigma)
        fields.update(changes)
        return Grid(**fields)


def _shift(f: np.ndarray, axis: int, k: int) -> np.ndarray:
    # _shift(f, i, +1)[x] = f[x + h e_i]
    return np.roll(f, -k, axis=axis)


def laplacian(f: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(f, dtype=float)
    for i in range(f.ndim):
        out += _shift(f, i, 1) + _shift(f, i, -1) - 2.0 * f
    return out / h**2


def gradient(f: np.ndarray, h: float) -> np.ndarray:
    """Centered gradient, returns shape ``(d,) + f.shape``."""
    return np.stack([(_shift(f, i, 1) - _shift(f, i, -1)) / (2 * h) for i in range(f.ndim)])


def forward_gradient(f: np.ndarray, h: float) -> np.ndarray:
    return np.stack([(_shift(f, i, 1) - f) / h for i in range(f.ndim)])


def divergence(w: np.ndarray, h: float) -> np.ndarray:
    """Centered divergence of a vector field of shape ``(d,) + space``."""
    d = w.shape[0]
    out = np.zeros(w.shape[1:])
    for i in range(d):
        out += (_shift(w[i], i, 1) - _shift(w[i], i, -1)) / (2 * h)
    return out


def _gauss_offsets(h: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    xi, wi = np.polynomial.legendre.leggauss(order)
    return 0.5 * h * xi, 0.5 * wi


def restrict(fc: Callable[[np.ndarray], np.ndarray], grid: Grid, order: int = 3) -> np.ndarray:
    """Cell integrals of ``fc`` over ``[x - h/2, x + h/2)^d`` by tensor Gauss quadrature.

    ``fc`` receives coordinates of shape ``(d, ...)`` wrapped into ``[0, 1)``
    and returns values of shape ``(...)``.
    """
    offsets, weights = _gauss_offsets(grid.h, order)
    out = np.zeros(grid.shape)
    base = grid.coords
    for idx in np.ndindex(*(order,) * grid.d):
        shift = np.array([offsets[k] for k in idx]).reshape((grid.d,) + (1,) * grid.d)
        w = math.prod(weights[k] for k in idx)
        out += w * np.asarray(fc(np.mod(base + shift, 1.0)), dtype=float)
    return out * grid.cell_volume


def reconstruct(m: np.ndarray, grid: Grid) -> Callable[[np.ndarray], np.ndarray]:
    """Piecewise-constant density equal to ``m(x) / h^d`` on the cell of ``x``."""
    values = np.asarray(m, dtype=float) / grid.cell_volume

    def density(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        idx = np.mod(np.floor(y / grid.h + 0.5).astype(int), grid.N)
        return values[tuple(idx)]

    return density


def lipschitz_seminorm(f: np.ndarray, h: float) -> float:
    """``max_{x,i} |f(x + h e_i) - f(x)| / h``."""
    return max(float(np.max(np.abs(_shift(f, i, 1) - f))) for i in range(f.ndim)) / h


def norm_inf_1(m: np.ndarray) -> float:
    """Sup over the leading (time) axis of the spatial l1 norm."""
    m = np.asarray(m)
    return float(np.max(np.abs(m).reshape(m.shape[0], -1).sum(axis=1)))


def norm_inf_inf(u: np.ndarray) -> float:
    return float(np.max(np.abs(u)))


def write_field_csv(path: str | Path, field: np.ndarray, d: int) -> None:
    """Dump a field as CSV with header ``t,i0[,i1],value``.

    ``field`` is a single spatial slice (``ndim == d``) or a time series with a
    leading time axis. Rows are time-major, then row-major in space.
    """
    field = np.asarray(field, dtype=float)
    if field.ndim == d:
        field = field[None]
    header = ["t"] + [f"i{k}" for k in range(d)] + ["value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t in range(field.shape[0]):
            for idx in np.ndindex(*field.shape[1:]):
                writer.writerow([t, *idx, format(float(field[(t, *idx)]), ".17g")])


def read_field_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 2
    idx = np.array([[int(v) for v in r[: d + 1]] for r in body])
    values = np.array([float(r[-1]) for r in body])
    shape = tuple(idx.max(axis=0) + 1)
    out = np.zeros(shape)
    out[tuple(idx.T)] = values
    return out
