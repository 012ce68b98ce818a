"""Acceptance criteria 1-10; each test prints one PASS/FAIL line."""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import bump_curve, cfl_grid, make_problem
from thetamfg.config import load_config
from thetamfg.discrete_mfg import build_transition, dp_roll, kolmogorov_roll
from thetamfg.grid import Grid, divergence, forward_gradient, gradient, laplacian, norm_inf_1
from thetamfg.harness import run_convergence, run_energy_test, run_fundamental_test
from thetamfg.heat import HeatSolveOptions, contraction_factor, contraction_iterates, solve_b1
from thetamfg.numham import NumHamiltonian, check_axioms, double_well_cost
from thetamfg.problem import QuadraticCost
from thetamfg.scheme import fp_forward, hjb_backward
from thetamfg.solver import SolveOptions, solve_mfg, write_iteration_log

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
ACCEPT_N = 64
SOLVE = SolveOptions(damping="fixed", omega=0.5, tol=1e-9, max_outer=5000)


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail} ({elapsed:.1f}s, limit {limit:.0f}s)")
        assert ok, detail

    return emit


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), np.finfo(float).tiny)


def test_c01_exact_identities(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_ibp = worst_lap = 0.0
    norm_ok = True
    for d, N in ((1, 64), (2, 16)):
        h = 1 / N
        shape = (N,) * d
        for _ in range(100):
            mu, nu = rng.normal(size=shape), rng.normal(size=shape)
            w = rng.normal(size=(d,) + shape)
            worst_ibp = max(worst_ibp, rel(-np.sum(mu * divergence(w, h)), np.sum(gradient(mu, h) * w)))
            worst_lap = max(
                worst_lap, rel(-np.sum(nu * laplacian(mu, h)), np.sum(forward_gradient(nu, h) * forward_gradient(mu, h)))
            )
            norm_ok &= np.sum(gradient(mu, h) ** 2) <= np.sum(forward_gradient(mu, h) ** 2)
    elapsed = time.perf_counter() - start
    ok = worst_ibp <= 1e-12 and worst_lap <= 1e-12 and norm_ok
    verdict("C1 exact identities", ok, f"div rel={worst_ibp:.2e} lap rel={worst_lap:.2e} norm_ineq={norm_ok}", elapsed, 5)


def test_c02_implicit_heat(verdict):
    start = time.perf_counter()
    grid = cfl_grid(ACCEPT_N)
    c = grid.theta * grid.sigma
    rng = np.random.default_rng(2)
    cross = pos = mass = 0.0
    for _ in range(10):
        X = rng.random(grid.shape)
        X /= X.sum()
        Y = solve_b1(X, c, grid)
        Yc = solve_b1(X, c, grid, HeatSolveOptions(method="contraction"))
        cross = max(cross, float(np.max(np.abs(Y - Yc))))
        pos = min(pos, float(Y.min()), float(Yc.min()))
        mass = max(mass, abs(Y.sum() - 1), abs(Yc.sum() - 1))
    gamma = contraction_factor(c, grid)
    X = rng.normal(size=grid.shape)
    exact = solve_b1(X, c, grid)
    it = contraction_iterates(X, c, grid)
    errs = [float(np.max(np.abs(next(it) - exact))) for _ in range(40)]
    ratio = max(b / a for a, b in zip(errs, errs[1:]) if a > 1e-12)
    elapsed = time.perf_counter() - start
    ok = cross <= 1e-10 and pos >= -1e-12 and mass <= 1e-12 and ratio <= gamma + 1e-6
    detail = f"cross={cross:.2e} min={pos:.2e} mass={mass:.2e} ratio={ratio:.6f} bound={gamma:.6f}"
    verdict("C2 implicit heat step", ok, detail, elapsed, 10)


def test_c03_fp_mass_positivity(verdict):
    start = time.perf_counter()
    spec = make_problem()
    grid = cfl_grid(ACCEPT_N)
    assert grid.T == 410
    m_curve = np.broadcast_to(grid.uniform(), (grid.T + 1,) + grid.shape).copy()
    hjb = hjb_backward(m_curve, spec, grid)
    m = fp_forward(hjb.v, spec.initial_density(grid), grid)
    sums = m.sum(axis=1)
    drift = float(np.max(np.abs(np.diff(sums))))
    low = float(m.min())
    elapsed = time.perf_counter() - start
    ok = drift <= 1e-12 and low >= -1e-12
    verdict("C3 FP mass and positivity", ok, f"N=64 T={grid.T} step drift={drift:.2e} min m={low:.2e}", elapsed, 30)


def test_c04_scheme_kernel_equivalence(verdict):
    start = time.perf_counter()
    spec = make_problem()
    grid = Grid(d=1, N=8, T=16, theta=0.75, sigma=0.2)
    model = build_transition(grid, spec)
    M = model.control_bound
    rng = np.random.default_rng(4)
    fp_err = dp_err = 0.0
    for _ in range(20):
        v = rng.uniform(-M, M, (grid.T, 1) + grid.shape)
        m0 = rng.random(grid.shape)
        m0 /= m0.sum()
        fp_err = max(fp_err, float(np.max(np.abs(kolmogorov_roll(model, v, m0) - fp_forward(v, m0, grid)))))
        m = rng.random((grid.T + 1,) + grid.shape)
        m /= m.sum(axis=1, keepdims=True)
        u, vv = dp_roll(model, m, spec)
        ref = hjb_backward(m, spec, grid)
        dp_err = max(dp_err, float(np.max(np.abs(u - ref.u))), float(np.max(np.abs(vv - ref.v))))
    e0, e1 = model.row_sum_defects()
    dom = model.dominance_defect()
    elapsed = time.perf_counter() - start
    ok = fp_err <= 1e-10 and dp_err <= 1e-10 and e0 <= 1e-12 and e1 <= 1e-12 and dom <= 1e-12
    detail = f"fp={fp_err:.2e} dp={dp_err:.2e} rows0={e0:.2e} rows1={e1:.2e} dominance={dom:.2e}"
    verdict("C4 scheme/kernel equivalence", ok, detail, elapsed, 60)


def _solve_acceptance():
    spec = make_problem()
    grid = cfl_grid(ACCEPT_N)
    return spec, grid, solve_mfg(spec, grid, SOLVE)


def test_c05_equilibrium_and_uniqueness(verdict):
    start = time.perf_counter()
    spec, grid, sol = _solve_acceptance()
    other = solve_mfg(spec, grid, SOLVE, m_init=bump_curve(grid))
    gap = norm_inf_1(sol.m - other.m)
    max_v = max(row[3] for row in sol.history + other.history)
    active = sol.active_truncation + other.active_truncation
    elapsed = time.perf_counter() - start
    ok = sol.converged and other.converged and sol.residual <= 1e-9 and gap <= 1e-7 and max_v <= sol.M and active == 0
    detail = (
        f"residual={sol.residual:.2e} iters={sol.iterations}/{other.iterations} gap={gap:.2e} "
        f"max|v|={max_v:.4f} M={sol.M:.4f} active={active}"
    )
    verdict("C5 equilibrium and uniqueness", ok, detail, elapsed, 300)


def test_c06_fundamental_inequality(verdict):
    start = time.perf_counter()
    rows, summary = run_fundamental_test(load_config(CONFIGS / "fundamental.toml"))
    tested = [r for r in rows if r["magnitude"] > 0]
    worst = min(r["rhs"] + 1e-8 - r["lhs"] for r in tested)
    elapsed = time.perf_counter() - start
    ok = len(tested) == 9 and summary["passed"] and summary["flagged"] == 0 and worst >= 0
    verdict("C6 fundamental inequality", ok, f"runs={len(tested)} worst rhs+1e-8-lhs={worst:.3e}", elapsed, 600)


def test_c07_energy_stability(verdict):
    start = time.perf_counter()
    rows, summary = run_energy_test(load_config(CONFIGS / "energy.toml"), seed=0)
    amps = ", ".join(f"{r['amplification']:.4f}" for r in rows)
    elapsed = time.perf_counter() - start
    ok = [r["N"] for r in rows] == [8, 16, 32, 64] and summary["worst_adjacent_ratio"] < 2 and summary[
        "worst_linearity_error"
    ] <= 1e-10
    detail = f"A={amps} worst ratio={summary['worst_adjacent_ratio']:.3f} linearity={summary['worst_linearity_error']:.2e}"
    verdict("C7 energy stability", ok, detail, elapsed, 600)


def test_c08_convergence_rate(verdict):
    start = time.perf_counter()
    report = run_convergence(load_config(CONFIGS / "ladder.toml"))
    dec_u, dec_m = report.strictly_decreasing()
    elapsed = time.perf_counter() - start
    ok = [r["N"] for r in report.rows] == [8, 16, 32] and dec_u and dec_m and report.fitted_rate_m >= 0.5
    detail = (
        f"err_u={np.array2string(report.err_u, precision=3)} err_m={np.array2string(report.err_m, precision=3)} "
        f"rate_u={report.fitted_rate_u:.3f} rate_m={report.fitted_rate_m:.3f}"
    )
    verdict("C8 convergence rate", ok, detail, elapsed, 900)


def test_c09_numerical_hamiltonian(verdict):
    start = time.perf_counter()
    quad = check_axioms(NumHamiltonian(QuadraticCost(alpha=1.0)), 10_000, 42)
    worst_quad = max(r.max_violation for r in quad.results)
    adversarial = check_axioms(NumHamiltonian(double_well_cost(1.0)), 10_000, 42)
    g4 = adversarial["g4"]
    nh = NumHamiltonian(QuadraticCost(alpha=1.0, drift=0.25))
    rng = np.random.default_rng(9)
    v = np.arange(0.0, 3.0 + 5e-4, 1e-3)
    oracle_err = 0.0
    for q in rng.uniform(-2, 2, (10, 2)):
        # the quadratic split objective separates into one scan per slot
        scan = np.max(-v * (q[0] + 0.25) - 0.5 * v**2) + np.max(v * (q[1] + 0.25) - 0.5 * v**2)
        oracle_err = max(oracle_err, abs(nh.value(0.0, np.zeros((1, 1)), q.reshape(2, 1))[0] - scan))
    elapsed = time.perf_counter() - start
    ok = quad.passed and worst_quad <= 1e-8 and (not g4.passed) and g4.max_violation > 0 and oracle_err <= 1e-3
    detail = f"quadratic worst={worst_quad:.2e} adversarial g4={g4.max_violation:.3e} oracle={oracle_err:.2e}"
    verdict("C9 numerical Hamiltonian audit", ok, detail, elapsed, 60)


def test_c10_determinism(verdict, tmp_path):
    start = time.perf_counter()
    logs = []
    for name in ("first", "second"):
        _, _, sol = _solve_acceptance()
        path = tmp_path / f"{name}.csv"
        write_iteration_log(path, sol.history)
        logs.append(path.read_bytes())
    elapsed = time.perf_counter() - start
    verdict("C10 determinism", logs[0] == logs[1], f"iteration logs identical={logs[0] == logs[1]} bytes={len(logs[0])}", elapsed, 600)
