"""Outer fixed-point loop for the equilibrium ``m = phi(m)``."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .grid import Grid, norm_inf_1
from .heat import HeatSolveOptions
from .problem import ProblemSpec, cfl_check, cfl_time_steps, control_bound
from .scheme import FpPerturbation, HjbResult, fp_diagnostics, fp_forward, hjb_backward
from .validation import ValidationError, check_curve

__all__ = [
    "SolveOptions",
    "MfgSolution",
    "CflViolation",
    "phi",
    "residual",
    "initial_curve",
    "solve_mfg",
    "write_iteration_log",
    "ThetaSchemeMFG",
]

logger = logging.getLogger(__name__)

DAMPING = ("fictitious", "fixed", "plain")
INITS = ("uniform", "diffusion")


class CflViolation(ValidationError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    """Outer loop settings.

    ``damping``: ``fictitious`` (``omega_k = 1/(k+1)``), ``fixed`` (constant
    ``omega``) or ``plain`` (``omega = 1``). ``override_cfl`` lets the solve
    run when the CFL condition fails or ``theta`` is outside ``(1/2, 1)``.
    """

    damping: str = "fictitious"
    omega: float = 0.5
    tol: float = 1e-9
    max_outer: int = 5000
    init: str = "uniform"
    D: Optional[float] = None
    heat: HeatSolveOptions = field(default_factory=HeatSolveOptions)
    override_cfl: bool = False

    def __post_init__(self):
        if self.damping not in DAMPING:
            raise ValueError(f"damping must be one of {DAMPING}, got {self.damping!r}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.omega <= 1:
            raise ValueError("omega must lie in (0, 1]")
        if self.max_outer < 0:
            raise ValueError("max_outer must be nonnegative")

    def weight(self, k: int) -> float:
        if self.damping == "fictitious":
            return 1.0 / (k + 1)
        if self.damping == "fixed":
            return self.omega
        return 1.0


@dataclass
class MfgSolution:
    u: np.ndarray
    v: np.ndarray
    m: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)  # rows (k, omega, residual, max_abs_v, min_m)
    M: float = math.inf
    grid: Optional[Grid] = None
    u_half: Optional[np.ndarray] = None
    active_truncation: int = 0  # summed over all outer iterations

    def diagnostics(self, active: Optional[np.ndarray] = None) -> np.ndarray:
        return fp_diagnostics(self.m, self.v, active)


def _perturbation(delta: Optional[np.ndarray]) -> Optional[FpPerturbation]:
    return None if delta is None else FpPerturbation(jump=np.asarray(delta, dtype=float))


def phi(
    m: np.ndarray,
    spec: ProblemSpec,
    grid: Grid,
    D: Optional[float] = None,
    heat: Optional[HeatSolveOptions] = None,
    eta: Optional[np.ndarray] = None,
    delta: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, HjbResult]:
    """Best-response density curve for ``m`` and the backward pass behind it.

    ``eta`` and ``delta`` turn this into the map of the perturbed system.
    """
    hjb = hjb_backward(m, spec, grid, D=D, heat=heat, eta=eta)
    m0 = spec.initial_density(grid)
    return fp_forward(hjb.v, m0, grid, _perturbation(delta), heat), hjb


def residual(m: np.ndarray, spec: ProblemSpec, grid: Grid, D: Optional[float] = None, **kwargs) -> float:
    """``|| m - phi(m) ||_{inf,1}``."""
    out, _ = phi(m, spec, grid, D=D, **kwargs)
    return norm_inf_1(m - out)


def initial_curve(spec: ProblemSpec, grid: Grid, init: str, heat: Optional[HeatSolveOptions] = None) -> np.ndarray:
    m0 = spec.initial_density(grid)
    if init == "uniform":
        m = np.broadcast_to(grid.uniform(), (grid.T + 1,) + grid.shape).copy()
        m[0] = m0
        return m
    if init == "diffusion":
        return fp_forward(np.zeros((grid.T, grid.d) + grid.shape), m0, grid, heat=heat)
    raise ValueError(f"unknown init {init!r}")


def _check_admissible(grid: Grid, M: float, override: bool) -> None:
    if not 0.5 < grid.theta < 1:
        if not override:
            raise ValidationError(f"theta must lie in (1/2, 1), got {grid.theta}")
        logger.warning("theta=%s is outside (1/2, 1); guarantees do not apply", grid.theta)
        if grid.theta >= 1:
            return
    report = cfl_check(grid, M)
    if not report.ok:
        if not override:
            raise CflViolation(f"CFL condition fails: {report.describe()}")
        logger.warning("CFL condition fails: %s", report.describe())


def solve_mfg(
    spec: ProblemSpec,
    grid: Grid,
    options: Optional[SolveOptions] = None,
    eta: Optional[np.ndarray] = None,
    delta: Optional[np.ndarray] = None,
    m_init: Optional[np.ndarray] = None,
) -> MfgSolution:
    """Damped fixed-point iteration ``m <- (1 - w) m + w phi(m)``.

    Stops as soon as ``|| m_k - phi(m_k) ||_{inf,1} <= tol`` and returns
    ``m_k`` together with the backward pass at ``m_k``, so the reported
    residual is reproduced exactly by :func:`residual`. With ``eta`` or
    ``delta`` the perturbed system is solved instead.
    """
    options = options or SolveOptions()
    M = control_bound(spec, grid)
    D = M if options.D is None else options.D
    _check_admissible(grid, M, options.override_cfl)
    T = grid.T
    if eta is not None:
        eta = check_curve(eta, grid, "eta", slices=T)
    if delta is not None:
        delta = check_curve(delta, grid, "delta", slices=T)

    if m_init is not None:
        m = check_curve(m_init, grid, "m_init").copy()
    else:
        m = initial_curve(spec, grid, options.init, options.heat)
    m0 = spec.initial_density(grid)
    pert = _perturbation(delta)

    history = []
    active_total = 0
    converged = False
    k = 0
    while True:
        hjb = hjb_backward(m, spec, grid, D=D, heat=options.heat, eta=eta)
        best = fp_forward(hjb.v, m0, grid, pert, options.heat)
        r = norm_inf_1(m - best)
        omega = options.weight(k)
        active_total += hjb.n_active
        max_v = float(np.max(np.sqrt(np.sum(hjb.v**2, axis=1))))
        history.append((k, omega, r, max_v, float(np.min(m))))
        if not np.isfinite(r):
            logger.error("outer iteration diverged at k=%d", k)
            break
        if r <= options.tol:
            converged = True
            break
        if k >= options.max_outer:
            logger.warning("no convergence after %d outer iterations (residual %.3e)", k, r)
            break
        m = (1 - omega) * m + omega * best
        k += 1

    return MfgSolution(
        u=hjb.u,
        v=hjb.v,
        m=m,
        residual=r,
        iterations=k,
        converged=converged,
        history=history,
        M=M,
        grid=grid,
        u_half=hjb.u_half,
        active_truncation=active_total,
    )


def write_iteration_log(path: str | Path, history: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "omega", "residual", "max_abs_v", "min_m"])
        for k, omega, r, max_v, min_m in history:
            writer.writerow([k] + [format(float(a), ".17g") for a in (omega, r, max_v, min_m)])


class ThetaSchemeMFG(BaseEstimator):
    """Estimator-style front end to :func:`solve_mfg`.

    ``fit`` takes a :class:`ProblemSpec` in place of a design matrix and
    stores the equilibrium in trailing-underscore attributes. ``transform``
    maps a density curve to its best response on the fitted grid.
    """

    def __init__(
        self,
        N=32,
        T=None,
        d=1,
        theta=0.75,
        sigma=0.2,
        damping="fictitious",
        omega=0.5,
        tol=1e-9,
        max_outer=5000,
        init="uniform",
        heat_method="spectral",
        override_cfl=False,
    ):
        self.N = N
        self.T = T
        self.d = d
        self.theta = theta
        self.sigma = sigma
        self.damping = damping
        self.omega = omega
        self.tol = tol
        self.max_outer = max_outer
        self.init = init
        self.heat_method = heat_method
        self.override_cfl = override_cfl

    def _options(self) -> SolveOptions:
        return SolveOptions(
            damping=self.damping,
            omega=self.omega,
            tol=self.tol,
            max_outer=self.max_outer,
            init=self.init,
            heat=HeatSolveOptions(method=self.heat_method),
            override_cfl=self.override_cfl,
        )

    def _grid(self) -> Grid:
        T = self.T if self.T is not None else cfl_time_steps(self.N, self.d, self.theta, self.sigma)
        return Grid(d=self.d, N=self.N, T=T, theta=self.theta, sigma=self.sigma)

    def fit(self, X: ProblemSpec, y=None):
        if not isinstance(X, ProblemSpec):
            raise TypeError(f"fit expects a ProblemSpec, got {type(X).__name__}")
        grid = self._grid()
        sol = solve_mfg(X, grid, self._options())
        self.problem_ = X
        self.grid_ = grid
        self.M_ = sol.M
        self.u_ = sol.u
        self.v_ = sol.v
        self.m_ = sol.m
        self.residual_ = sol.residual
        self.n_iter_ = sol.iterations
        self.converged_ = sol.converged
        self.history_ = sol.history
        self.solution_ = sol
        return self

    def transform(self, X):
        """Best response ``phi(m)`` for a density curve ``X`` on the fitted grid."""
        check_is_fitted(self, "m_")
        m = check_curve(X, self.grid_)
        out, _ = phi(m, self.problem_, self.grid_, heat=HeatSolveOptions(method=self.heat_method))
        return out

    def predict(self, X=None):
        """The fitted equilibrium density curve."""
        check_is_fitted(self, "m_")
        return self.m_

    def score(self, X=None, y=None) -> float:
        """Negative fixed-point residual of the fitted curve."""
        check_is_fitted(self, "m_")
        return -self.residual_
