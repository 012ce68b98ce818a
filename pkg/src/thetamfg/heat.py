"""Implicit half-step ``(Id - c dt Lap_h) Y = X`` on the periodic grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np

from .grid import Grid, laplacian

__all__ = [
    "HeatSolveOptions",
    "HeatSolveError",
    "solve_b1",
    "solve_b1_vector",
    "contraction_map",
    "contraction_iterates",
    "contraction_factor",
    "heat_symbol",
]


class HeatSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class HeatSolveOptions:
    method: str = "spectral"
    tol: float = 1e-12
    max_iter: Optional[int] = None

    def __post_init__(self):
        if self.method not in ("spectral", "contraction"):
            raise ValueError(f"unknown heat solve method {self.method!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def _ratio(c: float, grid: Grid) -> float:
    return c * grid.dt / grid.h**2


def contraction_factor(c: float, grid: Grid) -> float:
    """Sup-norm Lipschitz constant ``2dr / (1 + 2dr)`` of the fixed-point map."""
    r = _ratio(c, grid)
    return 2 * grid.d * r / (1 + 2 * grid.d * r)


def _default_max_iter(c: float, grid: Grid, tol: float) -> int:
    gamma = contraction_factor(c, grid)
    if gamma == 0:
        return 1
    # enough sweeps to shrink an O(1) error below tol, with slack
    n = 10 * math.ceil(math.log(tol / 1e3) / math.log(gamma))
    return int(min(max(n, 10), 10**6))


@lru_cache(maxsize=64)
def _symbol(shape: tuple[int, ...], coef: float) -> np.ndarray:
    N = shape[0]
    k = np.arange(N)
    one_axis = 2.0 * (1.0 - np.cos(2 * np.pi * k / N))
    sym = np.zeros([N] * (len(shape) - 1) + [N // 2 + 1])
    for i in range(len(shape)):
        n_i = N if i < len(shape) - 1 else N // 2 + 1
        s = one_axis[:n_i].reshape([1] * i + [n_i] + [1] * (len(shape) - i - 1))
        sym = sym + s
    return 1.0 + coef * sym


def heat_symbol(c: float, grid: Grid) -> np.ndarray:
    """Real-FFT symbol ``1 + c dt (2/h^2) sum_i (1 - cos(2 pi k_i / N))``."""
    return _symbol(grid.shape, c * grid.dt / grid.h**2)


def contraction_map(Y: np.ndarray, X: np.ndarray, r: float) -> np.ndarray:
    d = Y.ndim
    acc = np.zeros_like(Y)
    for i in range(d):
        acc += np.roll(Y, 1, axis=i) + np.roll(Y, -1, axis=i)
    return (r * acc + X) / (1 + 2 * d * r)


def contraction_iterates(X: np.ndarray, c: float, grid: Grid) -> Iterator[np.ndarray]:
    """Infinite stream ``X, S_X(X), S_X(S_X(X)), ...``."""
    r = _ratio(c, grid)
    Y = np.array(X, dtype=float)
    while True:
        yield Y
        Y = contraction_map(Y, X, r)


def _residual(Y: np.ndarray, X: np.ndarray, c: float, grid: Grid) -> float:
    return float(np.max(np.abs(Y - c * grid.dt * laplacian(Y, grid.h) - X)))


def solve_b1(
    X: np.ndarray, c: float, grid: Grid, options: Optional[HeatSolveOptions] = None
) -> np.ndarray:
    """Solve ``(Id - c dt Lap_h) Y = X`` for a scalar field ``X``."""
    if c < 0:
        raise ValueError("diffusion weight c must be nonnegative")
    X = np.asarray(X, dtype=float)
    if c == 0:
        return X.copy()
    options = options or HeatSolveOptions()
    if options.method == "spectral":
        sym = heat_symbol(c, grid)
        return np.fft.irfftn(np.fft.rfftn(X) / sym, s=X.shape, axes=tuple(range(X.ndim)))

    max_iter = options.max_iter or _default_max_iter(c, grid, options.tol)
    r = _ratio(c, grid)
    scale = 1 + 2 * grid.d * r
    Y = X.copy()
    for _ in range(max_iter):
        Y_next = contraction_map(Y, X, r)
        # residual of Y equals scale * |Y - S_X(Y)|
        if scale * float(np.max(np.abs(Y_next - Y))) <= options.tol:
            return Y
        Y = Y_next
    if _residual(Y, X, c, grid) <= options.tol:
        return Y
    raise HeatSolveError(
        f"contraction did not reach tol={options.tol:g} in {max_iter} iterations "
        f"(factor {contraction_factor(c, grid):.6f})"
    )


def solve_b1_vector(
    X: np.ndarray, c: float, grid: Grid, options: Optional[HeatSolveOptions] = None
) -> np.ndarray:
    """Componentwise :func:`solve_b1` for a vector field of shape ``(d,) + space``."""
    return np.stack([solve_b1(x, c, grid, options) for x in np.asarray(X, dtype=float)])
