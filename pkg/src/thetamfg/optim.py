"""Vectorized projected gradient ascent used by the iterative Hamiltonians."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["AscentError", "AscentResult", "projected_ascent"]


class AscentError(RuntimeError):
    pass


@dataclass
class AscentResult:
    w: np.ndarray  # (k, n)
    converged: np.ndarray  # (n,) bool
    iterations: int

    def require(self, label: str = "projected gradient ascent") -> np.ndarray:
        if not np.all(self.converged):
            bad = int(np.count_nonzero(~self.converged))
            raise AscentError(f"{label} did not converge at {bad} point(s) in {self.iterations} iterations")
        return self.w


def projected_ascent(
    objective: Callable[[np.ndarray, np.ndarray], np.ndarray],
    gradient: Callable[[np.ndarray, np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    w0: np.ndarray,
    step: float,
    max_step: float,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> AscentResult:
    """Maximize independently at ``n`` samples; ``w0`` has shape ``(k, n)``.

    ``objective(w, idx)`` and ``gradient(w, idx)`` evaluate at the samples
    ``idx``. Each sample keeps its own step, halved when the
    sufficient-increase test fails and grown by 25% (up to ``max_step``)
    otherwise. A sample is frozen once its gradient-map norm is at most ``tol``.
    """
    w = project(np.array(w0, dtype=float))
    n = w.shape[1]
    converged = np.zeros(n, dtype=bool)
    idx = np.arange(n)
    wa = w
    steps = np.full(n, float(step))
    obj = objective(wa, idx)
    g = gradient(wa, idx)
    it = 0
    while idx.size and it < max_iter:
        it += 1
        w_new = project(wa + steps * g)
        dw = w_new - wa
        dw2 = np.sum(dw * dw, axis=0)
        done = np.sqrt(dw2) / steps <= tol
        if np.any(done):
            w[:, idx[done]] = w_new[:, done]
            converged[idx[done]] = True
            keep = ~done
            idx, wa, w_new, dw, dw2 = idx[keep], wa[:, keep], w_new[:, keep], dw[:, keep], dw2[keep]
            steps, obj, g = steps[keep], obj[keep], g[:, keep]
            if not idx.size:
                break
        obj_new = objective(w_new, idx)
        g_new = gradient(w_new, idx)
        ok = obj_new >= obj + np.sum(g * dw, axis=0) - dw2 / (2 * steps)
        # near the optimum the increase drops below rounding in the objective;
        # fall back to a local curvature test on gradients, which stays accurate
        flat = np.abs(obj_new - obj) <= 1e-12 * (1.0 + np.abs(obj))
        ok |= flat & (np.sum((g - g_new) * dw, axis=0) <= dw2 / steps)
        wa = np.where(ok, w_new, wa)
        obj = np.where(ok, obj_new, obj)
        g = np.where(ok, g_new, g)
        steps = np.where(ok, np.minimum(steps * 1.25, max_step), steps * 0.5)
    if idx.size:
        w[:, idx] = wa
    return AscentResult(w, converged, it)
