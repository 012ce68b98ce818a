"""Command line entry point ``thetamfg``.

Exit codes: 0 success, 2 invalid input or configuration, 3 a check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import Config, load_config
from .grid import write_field_csv
from .harness import (
    run_convergence,
    run_energy_test,
    run_fundamental_test,
    write_manifest,
    write_rows_csv,
)
from .numham import NumHamiltonian, check_axioms
from .problem import cfl_check, control_bound
from .scheme import write_diagnostics_csv
from .solver import solve_mfg, write_iteration_log
from .validation import ValidationError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CHECK_FAILED = 3

logger = logging.getLogger("thetamfg")


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_theta(cfg: Config, override: bool) -> None:
    theta = cfg.theta
    if not 0.5 < theta < 1:
        if not override:
            raise ValidationError(f"theta must lie in (1/2, 1), got {theta} (use --override-cfl to force)")
        logger.warning("theta=%s is outside (1/2, 1); guarantees do not apply", theta)


def cmd_solve(args, cfg: Config) -> int:
    _check_theta(cfg, args.override_cfl)
    spec = cfg.problem()
    grid = cfg.grid()
    sol = solve_mfg(spec, grid, cfg.solve_options(override_cfl=args.override_cfl))
    out = _out_dir(args, "runs")
    write_field_csv(out / "u.csv", sol.u, grid.d)
    write_field_csv(out / "m.csv", sol.m, grid.d)
    for i in range(grid.d):
        write_field_csv(out / f"v{i}.csv", sol.v[:, i], grid.d)
    write_iteration_log(out / "iteration_log.csv", sol.history)
    write_diagnostics_csv(out / "diagnostics.csv", sol.diagnostics())
    write_manifest(out, cfg, args.seed, "solve")
    status = "converged" if sol.converged else "NOT converged"
    print(
        f"solve N={grid.N} T={grid.T} theta={grid.theta} sigma={grid.sigma}: {status} "
        f"after {sol.iterations} iterations, residual={sol.residual:.3e}, M={sol.M:.6g}, "
        f"active_truncation={sol.active_truncation}"
    )
    return EXIT_OK if sol.converged else EXIT_CHECK_FAILED


def cmd_convergence(args, cfg: Config) -> int:
    _check_theta(cfg, args.override_cfl)
    report = run_convergence(cfg, override_cfl=args.override_cfl)
    out = _out_dir(args, "runs")
    report.write_csv(out / "convergence.csv")
    write_manifest(out, cfg, args.seed, "convergence")
    for r in report.rows:
        print(f"N={r['N']:4d} T={r['T']:6d} err_u={r['err_u']:.4e} err_m={r['err_m']:.4e} iters={r['outer_iters']}")
    print(f"fitted_rate_u={report.fitted_rate_u:.4f} fitted_rate_m={report.fitted_rate_m:.4f}")
    dec_u, dec_m = report.strictly_decreasing()
    return EXIT_OK if dec_u and dec_m else EXIT_CHECK_FAILED


def cmd_energy(args, cfg: Config) -> int:
    rows, summary = run_energy_test(cfg, seed=args.seed, override_cfl=args.override_cfl)
    out = _out_dir(args, "runs")
    write_rows_csv(out / "energy.csv", rows)
    write_manifest(out, cfg, args.seed, "energy")
    for r in rows:
        print(f"theta={r['theta']} N={r['N']:4d} A={r['amplification']:.6e} linearity={r['linearity_error']:.2e}")
    verdict = "PASS" if summary["passed"] else "FAIL"
    print(f"worst adjacent ratio={summary['worst_adjacent_ratio']:.4f} {verdict}")
    return EXIT_OK if summary["passed"] else EXIT_CHECK_FAILED


def cmd_fundamental(args, cfg: Config) -> int:
    _check_theta(cfg, args.override_cfl)
    seeds = None if args.seed is None else [args.seed]
    rows, summary = run_fundamental_test(cfg, seeds=seeds, override_cfl=args.override_cfl)
    out = _out_dir(args, "runs")
    write_rows_csv(out / "fundamental.csv", rows)
    write_manifest(out, cfg, args.seed, "fundamental")
    for r in rows:
        flag = " FLAGGED" if r["flagged"] else ""
        print(f"mag={r['magnitude']:.0e} seed={r['seed']} lhs={r['lhs']:.6e} rhs={r['rhs']:.6e}{flag}")
    print("PASS" if summary["passed"] else "FAIL")
    return EXIT_OK if summary["passed"] else EXIT_CHECK_FAILED


def cmd_check_cfl(args, cfg: Config) -> int:
    spec = cfg.problem()
    grid = cfg.grid()
    if grid.theta >= 1:
        raise ValidationError("the CFL bounds are undefined for theta = 1")
    report = cfl_check(grid, control_bound(spec, grid))
    print(f"dt_max={report.dt_max:.6g}")
    print(f"h_max={report.h_max:.6g}")
    print(report.describe())
    return EXIT_OK if report.ok else EXIT_CHECK_FAILED


def cmd_check_numham(args, cfg: Config) -> int:
    opts = cfg.numham()
    seed = opts["seed"] if args.seed is None else args.seed
    report = check_axioms(
        NumHamiltonian(opts["cost"]), opts["samples"], seed, d=opts["d"], scale=opts["scale"], tol=opts["tol"]
    )
    if args.out:
        out = _out_dir(args, "runs")
        report.write_csv(out / "numham.csv")
        write_manifest(out, cfg, seed, "check-numham")
    for r in report.results:
        print(f"{r.axiom} samples={r.samples} max_violation={r.max_violation:.3e} {'PASS' if r.passed else 'FAIL'}")
    if report.inner_failures:
        print(f"inner maximization stopped early at {report.inner_failures} sample(s)")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


COMMANDS = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "energy": cmd_energy,
    "fundamental": cmd_fundamental,
    "check-cfl": cmd_check_cfl,
    "check-numham": cmd_check_numham,
}


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thetamfg", description="Theta-scheme mean field game solver")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=_seed, default=None, help="seed for random inputs")
        p.add_argument("--override-cfl", action="store_true", help="run even if CFL or theta checks fail")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "energy" and args.seed is None:
            args.seed = 0
        return COMMANDS[args.command](args, cfg)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
