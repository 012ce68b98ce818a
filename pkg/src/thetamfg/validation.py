"""Input checks shared by the solver, the estimator and the harness."""

from __future__ import annotations

import numpy as np

from .grid import Grid

__all__ = ["check_curve", "check_controls", "check_probability_curve", "ValidationError"]


class ValidationError(ValueError):
    pass


def check_curve(m, grid: Grid, name: str = "m", slices: int | None = None) -> np.ndarray:
    """Finite float array of shape ``(slices,) + grid.shape`` (default ``T + 1`` slices)."""
    slices = grid.T + 1 if slices is None else slices
    arr = np.asarray(m, dtype=float)
    if arr.shape != (slices,) + grid.shape:
        raise ValidationError(f"{name} has shape {arr.shape}, expected {(slices,) + grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_controls(v, grid: Grid, bound: float | None = None, tol: float = 1e-9) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    expected = (grid.T, grid.d) + grid.shape
    if arr.shape != expected:
        raise ValidationError(f"v has shape {arr.shape}, expected {expected}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("v contains non-finite values")
    if bound is not None:
        speed = float(np.max(np.sqrt(np.sum(arr**2, axis=1))))
        if speed > bound + tol:
            raise ValidationError(f"controls exceed the bound {bound:.6g} (max {speed:.6g})")
    return arr


def check_probability_curve(m, grid: Grid, tol: float = 1e-10) -> np.ndarray:
    """A curve whose every slice is a probability vector up to ``tol``."""
    arr = check_curve(m, grid)
    flat = arr.reshape(arr.shape[0], -1)
    if np.min(flat) < -tol:
        raise ValidationError(f"density has negative entries (min {np.min(flat):.3e})")
    drift = float(np.max(np.abs(flat.sum(axis=1) - 1.0)))
    if drift > tol:
        raise ValidationError(f"density slices do not have unit mass (drift {drift:.3e})")
    return arr
