"""Experiment campaigns: self-convergence, energy stability, fundamental inequality.

Each campaign returns plain row dicts plus a summary and can persist them as
CSV with a ``manifest.txt`` alongside. Random inputs come from
``numpy.random.Philox`` streams spawned from the campaign seed.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import Config, ConfigError
from .grid import Grid, norm_inf_1
from .problem import ProblemSpec, cfl_check, cfl_time_steps, control_bound
from .scheme import FpPerturbation, fp_forward
from .discrete_mfg import PerturbedSolution, fundamental_gap
from .solver import SolveOptions, solve_mfg

__all__ = [
    "GENERATOR_ID",
    "ConvergenceReport",
    "nested_time_steps",
    "run_convergence",
    "energy_perturbation",
    "amplification",
    "run_energy_test",
    "run_fundamental_test",
    "write_rows_csv",
    "write_manifest",
    "worker_count",
    "spawn_rng",
]

logger = logging.getLogger(__name__)

GENERATOR_ID = "numpy.random.Philox"


def worker_count() -> int:
    """Thread cap from ``MFG_THREADS``, defaulting to the available cores."""
    env = os.environ.get("MFG_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"MFG_THREADS must be a positive integer, got {env!r}") from exc
        if n < 1:
            raise ConfigError(f"MFG_THREADS must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def spawn_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def _map(func, items: list) -> list:
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _grid_columns(grid: Grid) -> dict:
    return {"d": grid.d, "N": grid.N, "T": grid.T, "h": grid.h, "dt": grid.dt, "theta": grid.theta, "sigma": grid.sigma}


# ----------------------------------------------------------------------------
# Self-convergence


@dataclass
class ConvergenceReport:
    rows: list
    reference: dict
    fitted_rate_u: float
    fitted_rate_m: float

    @property
    def err_u(self) -> np.ndarray:
        return np.array([r["err_u"] for r in self.rows])

    @property
    def err_m(self) -> np.ndarray:
        return np.array([r["err_m"] for r in self.rows])

    def strictly_decreasing(self) -> tuple[bool, bool]:
        return bool(np.all(np.diff(self.err_u) < 0)), bool(np.all(np.diff(self.err_m) < 0))

    def write_csv(self, path: str | Path) -> None:
        rows = [dict(r, fitted_rate_u=self.fitted_rate_u, fitted_rate_m=self.fitted_rate_m) for r in self.rows]
        write_rows_csv(path, rows)


def nested_time_steps(levels: list[int], d: int, theta: float, sigma: float) -> dict[int, int]:
    """Time steps ``T_N = T_unit (N / N0)^2`` with ``N0 = gcd(levels)``.

    ``T_unit`` is the smallest value meeting the time-step CFL bound on every
    level, so ``dt`` scales exactly like ``h^2`` and ``T_N`` divides ``T_N'``
    whenever ``N`` divides ``N'``.
    """
    n0 = math.gcd(*levels)
    coef = 2 * d * (1 - theta) * sigma
    unit = max(math.ceil(coef * N**2 / (N // n0) ** 2 - 1e-9) for N in levels)
    unit = max(unit, 2)
    return {N: unit * (N // n0) ** 2 for N in levels}


def _validate_ladder(levels: list[int], reference: int) -> None:
    if not levels:
        raise ConfigError("convergence needs at least one level")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError(f"levels must be strictly increasing, got {levels}")
    if reference <= levels[-1]:
        raise ConfigError(f"reference N={reference} must exceed every level")
    bad = [N for N in levels if reference % N]
    if bad:
        raise ConfigError(f"reference N={reference} is not a multiple of levels {bad}")


def _fit_rate(h: np.ndarray, err: np.ndarray) -> float:
    if len(h) < 2 or np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def _check_grids(spec: ProblemSpec, grids: list[Grid], override: bool) -> None:
    for g in grids:
        report = cfl_check(g, control_bound(spec, g))
        if not report.ok and not override:
            raise ConfigError(f"level N={g.N} fails the CFL condition: {report.describe()}")


def run_convergence(cfg: Config, override_cfl: bool = False) -> ConvergenceReport:
    camp = cfg.campaign()
    levels, reference = camp["levels"], camp["reference"]
    _validate_ladder(levels, reference)
    spec = cfg.problem()
    options = cfg.solve_options(override_cfl=override_cfl)
    steps = nested_time_steps(levels + [reference], cfg.d, cfg.theta, cfg.sigma)
    grids = [cfg.grid(N=N, T=steps[N]) for N in levels + [reference]]
    _check_grids(spec, grids, override_cfl)

    solutions = _map(lambda g: solve_mfg(spec, g, options), grids)
    ref_grid, ref = grids[-1], solutions[-1]
    if not ref.converged:
        logger.warning("reference solve did not converge (residual %.3e)", ref.residual)

    rows = []
    for g, sol in zip(grids[:-1], solutions[:-1]):
        r = ref_grid.N // g.N
        tau = ref_grid.T // g.T
        space = (slice(None, None, r),) * g.d
        u_ref = ref.u[(slice(None, None, tau),) + space]
        # densities, not cell masses, are compared at the shared nodes
        rho_ref = ref.m[(slice(None, None, tau),) + space] / ref_grid.cell_volume
        rho = sol.m / g.cell_volume
        err_u = float(np.max(np.abs(sol.u - u_ref)))
        err_m = norm_inf_1((rho - rho_ref) * g.cell_volume)
        rows.append(
            dict(
                _grid_columns(g),
                err_u=err_u,
                err_m=err_m,
                outer_iters=sol.iterations,
                residual=sol.residual,
                converged=int(sol.converged),
                reference_N=ref_grid.N,
                reference_T=ref_grid.T,
            )
        )
    h = np.array([r["h"] for r in rows])
    report = ConvergenceReport(
        rows=rows,
        reference=dict(_grid_columns(ref_grid), outer_iters=ref.iterations, residual=ref.residual),
        fitted_rate_u=_fit_rate(h, np.array([r["err_u"] for r in rows])),
        fitted_rate_m=_fit_rate(h, np.array([r["err_m"] for r in rows])),
    )
    return report


# ----------------------------------------------------------------------------
# Energy stability


def energy_controls(grid: Grid, M: float) -> np.ndarray:
    """Fixed smooth controls with ``|v| <= M / 2``."""
    s = np.arange(grid.T) * grid.dt
    x = grid.coords
    shape = np.sin(2 * np.pi * x) / math.sqrt(grid.d)
    weight = 0.75 + 0.25 * np.cos(2 * np.pi * s)
    return 0.5 * M * weight.reshape((grid.T,) + (1,) * (grid.d + 1)) * shape[None]


def _smooth_field(rng: np.random.Generator, grid: Grid, modes: int = 2, time_modes: int = 3) -> np.ndarray:
    """Random trigonometric polynomial in space and time on the ``T`` control slices."""
    s = np.arange(grid.T) * grid.dt
    x = grid.coords
    out = np.zeros((grid.T,) + grid.shape)
    for k in np.ndindex(*(modes + 1,) * grid.d):
        phase = 2 * np.pi * np.tensordot(np.array(k, dtype=float), x, axes=1)
        for j in range(time_modes):
            a, b = rng.standard_normal(2)
            spatial = a * np.cos(phase) + b * np.sin(phase)
            out += np.cos(np.pi * j * s).reshape((grid.T,) + (1,) * grid.d) * spatial[None]
    return out


def energy_norm(pert: FpPerturbation, grid: Grid) -> float:
    """``(sum_t dt (|delta_v(t)|_2^2 + |delta(t)|_2^2))^{1/2}``."""
    total = 0.0
    if pert.delta_v is not None:
        total += float(np.sum(pert.delta_v**2))
    if pert.delta is not None:
        total += float(np.sum(pert.delta**2))
    return math.sqrt(grid.dt * total)


def energy_perturbation(grid: Grid, seed: int, scale: float = 1.0) -> FpPerturbation:
    """Seeded smooth perturbation normalized to energy norm ``scale``.

    Normalizing in the node-wise norm makes the ratio ``A(h)`` comparable
    across resolutions for a fixed underlying continuous perturbation.
    """
    rng = spawn_rng(seed, 1)
    delta_v = np.stack([_smooth_field(rng, grid) for _ in range(grid.d)], axis=1)
    delta = _smooth_field(rng, grid)
    pert = FpPerturbation(delta_v=delta_v, delta=delta)
    norm = energy_norm(pert, grid)
    return FpPerturbation(delta_v=delta_v * (scale / norm), delta=delta * (scale / norm))


def amplification(mu: np.ndarray, pert: FpPerturbation, grid: Grid) -> float:
    """``max_t |mu(t)|_2`` over the energy norm of the data; NaN for zero data."""
    num = float(np.max(np.sqrt(np.sum(mu.reshape(mu.shape[0], -1) ** 2, axis=1))))
    den = energy_norm(pert, grid)
    if den == 0:
        return float("nan")
    return num / den


def _energy_level(spec: ProblemSpec, grid: Grid, seed: int) -> dict:
    M = control_bound(spec, grid)
    v = energy_controls(grid, M)
    zero = np.zeros(grid.shape)
    pert = energy_perturbation(grid, seed)
    mu = fp_forward(v, zero, grid, pert)
    doubled = FpPerturbation(delta_v=2 * pert.delta_v, delta=2 * pert.delta)
    mu2 = fp_forward(v, zero, grid, doubled)
    linearity = float(np.max(np.abs(mu2 - 2 * mu)))
    peak = float(np.max(np.sqrt(np.sum(mu.reshape(mu.shape[0], -1) ** 2, axis=1))))
    return dict(
        _grid_columns(grid),
        seed=seed,
        M=M,
        max_mu_l2=peak,
        perturbation_norm=energy_norm(pert, grid),
        amplification=amplification(mu, pert, grid),
        linearity_error=linearity,
        cfl_ok=int(cfl_check(grid, M).ok),
    )


def run_energy_test(cfg: Config, seed: int = 0, override_cfl: bool = False) -> tuple[list, dict]:
    """Amplification factors over the refinement ladder.

    Returns the rows and a summary with the worst adjacent ratio and the
    worst linearity defect.
    """
    camp = cfg.campaign()
    levels = camp["energy_levels"]
    spec = cfg.problem()
    rows = []
    for theta in camp["thetas"]:
        if not 0.5 < theta < 1:
            raise ConfigError(f"energy test needs theta in (1/2, 1), got {theta}")
        grids = [cfg.grid(N=N, T=cfl_time_steps(N, cfg.d, theta, cfg.sigma), theta=theta) for N in levels]
        _check_grids(spec, grids, override_cfl)
        level_rows = _map(lambda g: _energy_level(spec, g, seed), grids)
        prev = None
        for row in level_rows:
            row["ratio_to_previous"] = float("nan") if prev is None else row["amplification"] / prev
            prev = row["amplification"]
        rows.extend(level_rows)
    ratios = [r["ratio_to_previous"] for r in rows if not math.isnan(r["ratio_to_previous"])]
    worst_ratio = max((max(q, 1 / q) for q in ratios), default=1.0)
    summary = {
        "worst_adjacent_ratio": worst_ratio,
        "worst_linearity_error": max(r["linearity_error"] for r in rows),
        "passed": worst_ratio < 2.0 and max(r["linearity_error"] for r in rows) <= 1e-10,
    }
    return rows, summary


# ----------------------------------------------------------------------------
# Fundamental inequality


def fundamental_perturbation(grid: Grid, magnitude: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``(eta, delta)`` with entries ``magnitude * U(-1, 1)``; ``delta`` scaled by ``h^d``.

    ``delta`` perturbs cell masses, whose size is ``h^d``, while ``eta``
    perturbs values of order one.
    """
    rng = spawn_rng(seed, 2)
    shape = (grid.T,) + grid.shape
    eta = magnitude * rng.uniform(-1.0, 1.0, shape)
    delta = magnitude * grid.cell_volume * rng.uniform(-1.0, 1.0, shape)
    return eta, delta


def solve_perturbed(
    spec: ProblemSpec, grid: Grid, options: SolveOptions, eta: np.ndarray, delta: np.ndarray
) -> PerturbedSolution:
    sol = solve_mfg(spec, grid, options, eta=eta, delta=delta)
    return PerturbedSolution(
        u=sol.u,
        v=sol.v,
        m=sol.m,
        eta=eta,
        delta=delta,
        residual=sol.residual,
        iterations=sol.iterations,
        converged=sol.converged,
    )


def run_fundamental_test(cfg: Config, seeds: Optional[list[int]] = None, override_cfl: bool = False) -> tuple[list, dict]:
    camp = cfg.campaign()
    seeds = camp["seeds"] if seeds is None else seeds
    spec = cfg.problem()
    N = camp["fundamental_level"]
    grid = cfg.grid(N=N, T=cfl_time_steps(N, cfg.d, cfg.theta, cfg.sigma))
    options = replace(cfg.solve_options(override_cfl=override_cfl), tol=camp["fundamental_tol"])
    exact = solve_mfg(spec, grid, options)
    if not exact.converged:
        raise RuntimeError(f"unperturbed solve did not converge (residual {exact.residual:.3e})")

    cases = [(mag, seed) for mag in [0.0] + camp["magnitudes"] for seed in seeds]

    def run(case):
        mag, seed = case
        eta, delta = fundamental_perturbation(grid, mag, seed)
        pert = solve_perturbed(spec, grid, options, eta, delta)
        row = dict(_grid_columns(grid), magnitude=mag, seed=seed)
        flagged = (not pert.converged) or bool(np.min(pert.m) < -1e-12)
        if flagged:
            row.update(lhs=float("nan"), rhs=float("nan"), margin=float("nan"))
        else:
            row.update(fundamental_gap(exact, pert, grid, spec))
        row.update(
            perturbed_residual=pert.residual,
            perturbed_iters=pert.iterations,
            min_m=float(np.min(pert.m)),
            flagged=int(flagged),
            passed=int((not flagged) and row["lhs"] <= row["rhs"] + 1e-8),
        )
        return row

    rows = _map(run, cases)
    tested = [r for r in rows if r["magnitude"] > 0]
    summary = {
        "exact_residual": exact.residual,
        "exact_iterations": exact.iterations,
        "passed": all(r["passed"] for r in tested),
        "flagged": sum(r["flagged"] for r in rows),
        "zero_case_max_abs": max(max(abs(r["lhs"]), abs(r["rhs"])) for r in rows if r["magnitude"] == 0),
    }
    return rows, summary


# ----------------------------------------------------------------------------
# Persistence


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_rows_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("no rows to write")
    header = list(rows[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([_fmt(r[k]) for k in header])


def write_manifest(out_dir: str | Path, cfg: Optional[Config], seed: Optional[int], kind: str) -> Path:
    path = Path(out_dir) / "manifest.txt"
    lines = [
        f"experiment={kind}",
        f"config_sha256={cfg.digest if cfg is not None else ''}",
        f"seed={'' if seed is None else seed}",
        f"generator={GENERATOR_ID}",
        f"thetamfg={__version__}",
        f"numpy={np.__version__}",
        f"python={platform.python_version()}",
    ]
    path.write_text("\n".join(lines) + "\n")
    return path
