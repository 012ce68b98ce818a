"""Problem data: running cost, coupling, terminal cost, initial density.

Also hosts the truncated Hamiltonian, the control bound ``M`` and the CFL check.
Costs are evaluated in continuous time ``s = t * dt``; every evaluator is
vectorized over nodes, with coordinates and controls carrying the spatial
component on the leading axis.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from .grid import Grid, restrict
from .optim import AscentError, projected_ascent

__all__ = [
    "HamiltonianEval",
    "HamiltonianSolveError",
    "QuadraticCost",
    "GenericCost",
    "LocalCoupling",
    "NonlocalCoupling",
    "ProblemSpec",
    "CflReport",
    "hamiltonian",
    "control_bound",
    "cfl_check",
    "cfl_time_steps",
    "parse_expression",
    "parse_local_map",
    "parse_kernel",
]


class HamiltonianSolveError(AscentError):
    """Inner maximization for a generic cost did not converge."""


@dataclass
class HamiltonianEval:
    value: np.ndarray
    control: np.ndarray  # maximizer v* = -H_p^D, shape (d, ...)
    truncation: float
    active: np.ndarray  # True where the ball constraint binds

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))


def _as_field(value, x: np.ndarray, components: Optional[int] = None) -> np.ndarray:
    """Broadcast a constant or evaluate a callable ``value(s, x)`` onto ``x``."""
    arr = np.asarray(value, dtype=float)
    space = x.shape[1:]
    if components is None:
        return np.broadcast_to(arr, space)
    if arr.ndim == 0:
        arr = np.full(components, float(arr))
    return np.broadcast_to(arr.reshape((components,) + (1,) * len(space)), (components,) + space)


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=0)


def _norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=0))


@dataclass(frozen=True)
class QuadraticCost:
    """``l(s, x, v) = alpha/2 |v|^2 + <b(s, x), v> + c(s, x)``.

    ``drift`` and ``offset`` are constants or callables ``(s, x) -> array``.
    """

    alpha: float
    drift: Union[float, tuple, Callable] = 0.0
    offset: Union[float, Callable] = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def b(self, s: float, x: np.ndarray) -> np.ndarray:
        if callable(self.drift):
            return np.broadcast_to(np.asarray(self.drift(s, x), dtype=float), x.shape)
        return _as_field(self.drift, x, components=x.shape[0])

    def c(self, s: float, x: np.ndarray) -> np.ndarray:
        if callable(self.offset):
            return np.broadcast_to(np.asarray(self.offset(s, x), dtype=float), x.shape[1:])
        return _as_field(self.offset, x)

    def value(self, s, x, v):
        return 0.5 * self.alpha * _dot(v, v) + _dot(self.b(s, x), v) + self.c(s, x)

    def grad(self, s, x, v):
        return self.alpha * v + self.b(s, x)

    def hamiltonian(self, s, x, p, D=math.inf) -> HamiltonianEval:
        # sup over |v| <= D of <-(p + b), v> - alpha/2 |v|^2 - c: the maximizer
        # points along -(p + b), so the ball projection is exact
        q = p + self.b(s, x)
        qn = _norm(q)
        free = qn / self.alpha
        active = free > D
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(active, D / np.where(qn > 0, qn, 1.0), 1.0 / self.alpha)
        v = -q * scale
        value = -_dot(p, v) - self.value(s, x, v)
        return HamiltonianEval(value, v, D, active)


@dataclass(frozen=True)
class GenericCost:
    """Strongly convex running cost given by an evaluator and its gradient.

    ``func(s, x, v)`` and ``grad(s, x, v)`` are vectorized with controls of
    shape ``(d, ...)``. The Hamiltonian is computed by projected gradient
    ascent with backtracking, starting from step ``1 / lipschitz``.
    """

    alpha: float
    func: Callable
    grad_func: Callable
    lipschitz: Optional[float] = None
    tol: float = 1e-10
    max_iter: int = 20000
    name: str = "generic"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def value(self, s, x, v):
        return np.asarray(self.func(s, x, v), dtype=float)

    def grad(self, s, x, v):
        return np.asarray(self.grad_func(s, x, v), dtype=float)

    def check_gradient(self, d: int, samples: int = 64, seed: int = 0, rtol: float = 1e-6) -> float:
        """Worst relative mismatch between ``grad`` and central differences."""
        rng = np.random.default_rng(seed)
        x = rng.random((d, samples))
        v = rng.normal(scale=2.0, size=(d, samples))
        s = 0.5
        g = self.grad(s, x, v)
        eps = 1e-6
        fd = np.empty_like(g)
        for i in range(d):
            e = np.zeros((d, 1))
            e[i] = eps
            fd[i] = (self.value(s, x, v + e) - self.value(s, x, v - e)) / (2 * eps)
        err = np.max(np.abs(fd - g) / np.maximum(1.0, np.abs(g)))
        if err > rtol:
            raise ValueError(f"gradient of {self.name} cost disagrees with finite differences ({err:.2e})")
        return float(err)

    def hamiltonian(self, s, x, p, D=math.inf) -> HamiltonianEval:
        d = p.shape[0]
        space = p.shape[1:]
        pf = p.reshape(d, -1)
        xf = np.broadcast_to(x, p.shape).reshape(d, -1)

        def project(v):
            if not math.isfinite(D):
                return v
            n = _norm(v)
            return v * np.where(n > D, D / np.where(n > 0, n, 1.0), 1.0)

        def objective(v, idx):
            return -_dot(pf[:, idx], v) - self.value(s, xf[:, idx], v)

        def gradient(v, idx):
            return -pf[:, idx] - self.grad(s, xf[:, idx], v)

        result = projected_ascent(
            objective,
            gradient,
            project,
            np.zeros_like(pf),
            step=1.0 / (self.lipschitz or 10.0 * self.alpha),
            max_step=1.0 / self.alpha,
            tol=self.tol,
            max_iter=self.max_iter,
        )
        try:
            v = result.require(f"Hamiltonian of {self.name} cost")
        except AscentError as exc:
            raise HamiltonianSolveError(str(exc)) from exc
        active = np.zeros(v.shape[1], dtype=bool)
        if math.isfinite(D):
            active = _norm(v) >= D * (1 - 1e-12)
        value = objective(v, np.arange(v.shape[1]))
        return HamiltonianEval(value.reshape(space), v.reshape(p.shape), D, active.reshape(space))


RunningCost = Union[QuadraticCost, GenericCost]


def hamiltonian(cost: RunningCost, s: float, x: np.ndarray, p: np.ndarray, D: float = math.inf) -> HamiltonianEval:
    """``H^D(s, x, p) = sup_{|v| <= D} <-p, v> - l(s, x, v)`` with its maximizer."""
    if not D > 0:
        raise ValueError("truncation D must be positive (or inf)")
    return cost.hamiltonian(s, np.asarray(x, dtype=float), np.asarray(p, dtype=float), D)


@dataclass(frozen=True)
class LocalCoupling:
    """``f(t, x, m) = F(m(x) / h^d)`` for a nondecreasing scalar map ``F``."""

    F: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __call__(self, grid: Grid, t: int, m: np.ndarray) -> np.ndarray:
        return np.asarray(self.F(np.asarray(m) / grid.cell_volume), dtype=float)

    def check_monotone(self, lo: float = 0.0, hi: float = 10.0, samples: int = 1001) -> bool:
        y = np.asarray(self.F(np.linspace(lo, hi, samples)), dtype=float)
        return bool(np.all(np.diff(y) >= -1e-12))


@dataclass(frozen=True)
class NonlocalCoupling:
    """``f(t, x, m)`` = cell average of ``K * R_h(m)`` for a periodic kernel ``K``.

    Reduces to a circular convolution of ``m`` with the kernel averaged over
    pairs of cells, ``k(z) = h^{-2d} int_B int_B K(z + a - b) da db``.
    """

    kernel: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    order: int = 3

    def weights(self, grid: Grid) -> np.ndarray:
        return _kernel_weights(self, grid.d, grid.N)

    def symbol(self, grid: Grid) -> np.ndarray:
        return np.fft.rfftn(self.weights(grid))

    def __call__(self, grid: Grid, t: int, m: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(self.symbol(grid) * np.fft.rfftn(m), s=grid.shape, axes=tuple(range(grid.d)))

    def check_psd(self, grid: Grid, tol: float = 1e-10) -> bool:
        """Nonnegative, real discrete Fourier symbol of the averaged kernel."""
        sym = np.fft.fftn(self.weights(grid))
        scale = max(1.0, float(np.max(np.abs(sym))))
        return bool(np.min(sym.real) >= -tol * scale and np.max(np.abs(sym.imag)) <= 1e-8 * scale)


@lru_cache(maxsize=32)
def _kernel_weights(coupling: NonlocalCoupling, d: int, N: int) -> np.ndarray:
    grid = Grid(d=d, N=N, T=2)
    xi, wi = np.polynomial.legendre.leggauss(coupling.order)
    a = 0.5 * grid.h * xi
    w = 0.5 * wi
    out = np.zeros(grid.shape)
    for ia in np.ndindex(*(coupling.order,) * d):
        for ib in np.ndindex(*(coupling.order,) * d):
            off = np.array([a[i] - a[j] for i, j in zip(ia, ib)]).reshape((d,) + (1,) * d)
            weight = math.prod(w[i] * w[j] for i, j in zip(ia, ib))
            out += weight * np.asarray(coupling.kernel(np.mod(grid.coords + off, 1.0)), dtype=float)
    return out


Coupling = Union[LocalCoupling, NonlocalCoupling]


@dataclass(frozen=True)
class ProblemSpec:
    """Continuous data of the game plus the constants entering ``M``.

    ``terminal`` maps coordinates ``(d, ...)`` to ``g``; ``initial`` maps them
    to a probability density on the torus. ``M`` overrides the computed
    control bound when given.
    """

    running_cost: RunningCost
    coupling: Coupling
    terminal: Callable[[np.ndarray], np.ndarray]
    initial: Callable[[np.ndarray], np.ndarray]
    L_ell: float = 0.0
    L_f: float = 0.0
    L_g: float = 0.0
    M: Optional[float] = None
    mass_tol: float = 1e-6
    labels: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if min(self.L_ell, self.L_f, self.L_g) < 0:
            raise ValueError("Lipschitz constants must be nonnegative")
        if self.M is not None and not self.M > 0:
            raise ValueError("M override must be positive")

    @property
    def alpha(self) -> float:
        return self.running_cost.alpha

    def terminal_values(self, grid: Grid) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.terminal(grid.coords), dtype=float), grid.shape).copy()

    def initial_density(self, grid: Grid, order: int = 3) -> np.ndarray:
        """Cell masses of the initial density, rescaled to exact unit mass."""
        m0 = restrict(self.initial, grid, order=order)
        mass = float(m0.sum())
        if abs(mass - 1.0) > self.mass_tol:
            raise ValueError(f"initial density has mass {mass:.8f}, expected 1")
        if np.min(m0) < 0:
            raise ValueError("initial density must be nonnegative")
        return m0 / mass

    def coupling_values(self, grid: Grid, t: int, m: np.ndarray) -> np.ndarray:
        return self.coupling(grid, t, m)


@dataclass(frozen=True)
class CflReport:
    ok: bool
    dt_max: float
    h_max: float
    dt: float
    h: float
    M: float

    def describe(self) -> str:
        verdict = "PASS" if self.ok else "FAIL"
        return (
            f"dt={self.dt:.6g} dt_max={self.dt_max:.6g} h={self.h:.6g} "
            f"h_max={self.h_max:.6g} M={self.M:.6g} {verdict}"
        )


def control_bound(spec: ProblemSpec, grid: Union[Grid, int]) -> float:
    """``M = (2 max |l_v(t, x, 0)| + sqrt(d) (L_l + L_f + L_g)) / alpha``.

    The max is taken over the space-time nodes of ``grid``. A bare dimension
    ``d`` samples a 4-point lattice per axis at 5 times instead, which also
    covers dimensions the grid does not support.
    """
    if spec.M is not None:
        return float(spec.M)
    if isinstance(grid, Grid):
        d = grid.d
        x = grid.coords
        times = np.arange(grid.T + 1) * grid.dt
    else:
        d = int(grid)
        if d < 1:
            raise ValueError("dimension must be positive")
        x = np.stack(np.meshgrid(*([np.arange(4) / 4] * d), indexing="ij"))
        times = np.linspace(0.0, 1.0, 5)
    cost = spec.running_cost
    zero = np.zeros_like(x)
    g0 = max(float(np.max(np.sqrt(np.sum(cost.grad(s, x, zero) ** 2, axis=0)))) for s in times)
    lip = spec.L_ell + spec.L_f + spec.L_g
    return (2 * g0 + math.sqrt(d) * lip) / spec.alpha


def cfl_check(grid: Grid, M: float) -> CflReport:
    if grid.theta >= 1:
        raise ValueError("CFL bounds are undefined for theta = 1")
    dt_max = grid.h**2 / (2 * grid.d * (1 - grid.theta) * grid.sigma)
    h_max = 2 * (1 - grid.theta) * grid.sigma / M if M > 0 else math.inf
    # relative slack absorbs rounding in dt = 1/T
    ok = grid.dt <= dt_max * (1 + 1e-12) and grid.h <= h_max * (1 + 1e-12)
    return CflReport(ok, dt_max, h_max, grid.dt, grid.h, M)


def cfl_time_steps(N: int, d: int, theta: float, sigma: float) -> int:
    """Smallest ``T`` with ``1/T`` satisfying the time-step half of the CFL condition."""
    if theta >= 1:
        return 2
    t_min = 2 * d * (1 - theta) * sigma * N**2
    return max(2, math.ceil(t_min - 1e-9))


# ----------------------------------------------------------------------------
# Built-in expressions for configuration files

_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def _parse_call(text: str) -> tuple[str, list[float]]:
    match = _CALL.match(text)
    if not match:
        raise ValueError(f"cannot parse expression {text!r}")
    name, args = match.group(1), match.group(2)
    values = [float(a) for a in args.split(",")] if args and args.strip() else []
    return name, values


def parse_expression(text: str, d: int) -> Callable[[np.ndarray], np.ndarray]:
    """Terminal/initial data by id: ``zero``, ``cos_sum``, ``uniform``,
    ``gaussian_bump(center, width)`` (periodized and normalized)."""
    name, args = _parse_call(text)
    if name == "zero" and not args:
        return lambda x: np.zeros(x.shape[1:])
    if name == "uniform" and not args:
        return lambda x: np.ones(x.shape[1:])
    if name == "cos_sum" and not args:
        return lambda x: np.sum(np.cos(2 * np.pi * x), axis=0)
    if name == "gaussian_bump" and len(args) == 2:
        center, width = args
        if width <= 0:
            raise ValueError("gaussian_bump width must be positive")
        norm = (2 * np.pi * width**2) ** (d / 2)
        reps = range(-3, 4)

        def bump(x):
            out = np.zeros(x.shape[1:])
            for k in np.ndindex(*(len(reps),) * d):
                shift = np.array([reps[i] for i in k]).reshape((d,) + (1,) * (x.ndim - 1))
                out += np.exp(-np.sum((x - center - shift) ** 2, axis=0) / (2 * width**2))
            return out / norm

        return bump
    raise ValueError(f"unknown expression {text!r}")


def parse_local_map(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """``identity`` or ``linear(a)`` with ``a >= 0``."""
    name, args = _parse_call(text)
    if name == "identity" and not args:
        return lambda rho: np.asarray(rho, dtype=float)
    if name == "linear" and len(args) == 1 and args[0] >= 0:
        a = args[0]
        return lambda rho: a * np.asarray(rho, dtype=float)
    raise ValueError(f"unknown or non-monotone local coupling {text!r}")


def parse_kernel(text: str, d: int) -> Callable[[np.ndarray], np.ndarray]:
    """``constant(a)``, ``cosine(a)`` or ``gaussian(width)``; all have nonnegative symbols."""
    name, args = _parse_call(text)
    if name == "constant" and len(args) <= 1:
        a = args[0] if args else 1.0
        return lambda z: np.full(z.shape[1:], a)
    if name == "cosine" and len(args) == 1 and args[0] >= 0:
        a = args[0]
        return lambda z: a * np.sum(np.cos(2 * np.pi * z), axis=0)
    if name == "gaussian" and len(args) == 1 and args[0] > 0:
        return parse_expression(f"gaussian_bump(0, {args[0]})", d)
    raise ValueError(f"unknown kernel {text!r}")
