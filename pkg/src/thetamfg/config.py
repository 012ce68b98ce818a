"""TOML configuration for problems, solver settings and campaigns.

Sections: ``[grid]``, ``[cost]``, ``[coupling]``, ``[terminal]``,
``[initial]``, ``[constants]``, ``[solver]``, ``[campaign]`` and
``[numham]``. A ``[campaign]`` may point at a separate problem file with
``problem = "path"``; its sections fill in whatever the campaign file omits.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .grid import Grid
from .heat import HeatSolveOptions
from .numham import double_well_cost
from .problem import (
    GenericCost,
    LocalCoupling,
    NonlocalCoupling,
    ProblemSpec,
    QuadraticCost,
    cfl_time_steps,
    parse_expression,
    parse_kernel,
    parse_local_map,
)
from .solver import SolveOptions
from .validation import ValidationError

__all__ = ["ConfigError", "Config", "load_config", "parse_config", "quartic_cost"]

_SECTIONS = {"grid", "cost", "coupling", "terminal", "initial", "constants", "solver", "campaign", "numham"}
_KEYS = {
    "grid": {"d", "N", "T", "theta", "sigma"},
    "cost": {"variant", "alpha", "b", "c", "beta"},
    "coupling": {"variant", "F", "kernel"},
    "terminal": {"expression"},
    "initial": {"expression"},
    "constants": {"L_ell", "L_f", "L_g", "M"},
    "solver": {"damping", "omega", "tol", "max_outer", "init", "heat_method", "heat_tol"},
    "campaign": {
        "problem",
        "levels",
        "reference",
        "thetas",
        "seeds",
        "magnitudes",
        "energy_levels",
        "fundamental_level",
        "fundamental_tol",
    },
    "numham": {"fixture", "samples", "seed", "d", "scale", "tol"},
}


class ConfigError(ValidationError):
    pass


def quartic_cost(alpha: float, beta: float) -> GenericCost:
    """``alpha/2 |v|^2 + beta |v|^4`` with ``beta >= 0``."""
    if beta < 0:
        raise ConfigError("quartic cost needs beta >= 0")

    def func(s, x, v):
        r2 = np.sum(v * v, axis=0)
        return 0.5 * alpha * r2 + beta * r2**2

    def grad(s, x, v):
        r2 = np.sum(v * v, axis=0)
        return (alpha + 4 * beta * r2) * v

    return GenericCost(alpha=alpha, func=func, grad_func=grad, name=f"quartic({beta:g})")


def _require(section: dict, key: str, kind, where: str):
    if key not in section:
        raise ConfigError(f"missing [{where}] {key}")
    return _coerce(section[key], kind, f"[{where}] {key}")


def _coerce(value, kind, label: str):
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{label} must be an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{label} must be a number")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{label} must be a string")
        return value
    return value


def _get(section: dict, key: str, kind, where: str, default):
    return default if key not in section else _coerce(section[key], kind, f"[{where}] {key}")


def _int_list(section: dict, key: str, default: list) -> list[int]:
    values = section.get(key, default)
    if not isinstance(values, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
        raise ConfigError(f"[campaign] {key} must be a list of integers")
    return list(values)


def _float_list(section: dict, key: str, default: list) -> list[float]:
    values = section.get(key, default)
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise ConfigError(f"[campaign] {key} must be a list of numbers")
    return [float(v) for v in values]


@dataclass
class Config:
    raw: dict
    source: str = ""
    digest: str = ""
    base_dir: Path = field(default_factory=Path)

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})

    # -- grid ---------------------------------------------------------------

    @property
    def d(self) -> int:
        return _get(self.section("grid"), "d", int, "grid", 1)

    @property
    def theta(self) -> float:
        return _get(self.section("grid"), "theta", float, "grid", 0.75)

    @property
    def sigma(self) -> float:
        return _get(self.section("grid"), "sigma", float, "grid", 0.2)

    def grid(self, N: Optional[int] = None, T: Optional[int] = None, theta: Optional[float] = None) -> Grid:
        g = self.section("grid")
        N = N if N is not None else _require(g, "N", int, "grid")
        theta = self.theta if theta is None else theta
        if T is None:
            T = _get(g, "T", int, "grid", None)
        if T is None:
            T = cfl_time_steps(N, self.d, theta, self.sigma)
        try:
            return Grid(d=self.d, N=N, T=T, theta=theta, sigma=self.sigma)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- problem ------------------------------------------------------------

    def problem(self) -> ProblemSpec:
        d = self.d
        cost_s = self.section("cost")
        variant = _get(cost_s, "variant", str, "cost", "quadratic")
        alpha = _require(cost_s, "alpha", float, "cost")
        if alpha <= 0:
            raise ConfigError("[cost] alpha must be positive")
        if variant == "quadratic":
            b = cost_s.get("b", 0.0)
            if isinstance(b, list):
                if len(b) != d:
                    raise ConfigError(f"[cost] b must have {d} entries")
                b = tuple(float(v) for v in b)
            else:
                b = _coerce(b, float, "[cost] b")
            cost = QuadraticCost(alpha=alpha, drift=b, offset=_get(cost_s, "c", float, "cost", 0.0))
        elif variant == "quartic":
            cost = quartic_cost(alpha, _get(cost_s, "beta", float, "cost", 0.1))
        else:
            raise ConfigError(f"unknown [cost] variant {variant!r}")

        coup_s = self.section("coupling")
        cvariant = _get(coup_s, "variant", str, "coupling", "local")
        try:
            if cvariant == "local":
                text = _get(coup_s, "F", str, "coupling", "identity")
                coupling = LocalCoupling(parse_local_map(text), name=text)
            elif cvariant == "nonlocal":
                text = _require(coup_s, "kernel", str, "coupling")
                coupling = NonlocalCoupling(parse_kernel(text, d), name=text)
            else:
                raise ConfigError(f"unknown [coupling] variant {cvariant!r}")
            terminal_text = _get(self.section("terminal"), "expression", str, "terminal", "zero")
            initial_text = _get(self.section("initial"), "expression", str, "initial", "uniform")
            terminal = parse_expression(terminal_text, d)
            initial = parse_expression(initial_text, d)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        const = self.section("constants")
        M = _get(const, "M", float, "constants", None)
        try:
            return ProblemSpec(
                running_cost=cost,
                coupling=coupling,
                terminal=terminal,
                initial=initial,
                L_ell=_get(const, "L_ell", float, "constants", 0.0),
                L_f=_get(const, "L_f", float, "constants", 0.0),
                L_g=_get(const, "L_g", float, "constants", 0.0),
                M=M,
                labels={"terminal": terminal_text, "initial": initial_text, "coupling": coupling.name},
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- solver -------------------------------------------------------------

    def solve_options(self, override_cfl: bool = False, tol: Optional[float] = None) -> SolveOptions:
        s = self.section("solver")
        try:
            heat = HeatSolveOptions(
                method=_get(s, "heat_method", str, "solver", "spectral"),
                tol=_get(s, "heat_tol", float, "solver", 1e-12),
            )
            return SolveOptions(
                damping=_get(s, "damping", str, "solver", "fictitious"),
                omega=_get(s, "omega", float, "solver", 0.5),
                tol=tol if tol is not None else _get(s, "tol", float, "solver", 1e-9),
                max_outer=_get(s, "max_outer", int, "solver", 5000),
                init=_get(s, "init", str, "solver", "uniform"),
                heat=heat,
                override_cfl=override_cfl,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- campaign -----------------------------------------------------------

    def campaign(self) -> dict:
        c = self.section("campaign")
        return {
            "levels": _int_list(c, "levels", [8, 16, 32]),
            "reference": _get(c, "reference", int, "campaign", 64),
            "thetas": _float_list(c, "thetas", [self.theta]),
            "seeds": _int_list(c, "seeds", [0, 1, 2]),
            "magnitudes": _float_list(c, "magnitudes", [1e-2, 1e-3, 1e-4]),
            "energy_levels": _int_list(c, "energy_levels", [8, 16, 32, 64]),
            "fundamental_level": _get(c, "fundamental_level", int, "campaign", 16),
            "fundamental_tol": _get(c, "fundamental_tol", float, "campaign", 1e-12),
        }

    def numham(self) -> dict:
        n = self.section("numham")
        fixture = _get(n, "fixture", str, "numham", "cost")
        if fixture == "cost":
            cost = self.problem().running_cost
        elif fixture == "double_well":
            cost = double_well_cost(_get(self.section("cost"), "alpha", float, "cost", 1.0))
        else:
            raise ConfigError(f"unknown [numham] fixture {fixture!r}")
        samples = _get(n, "samples", int, "numham", 10_000)
        if samples < 1:
            raise ConfigError("[numham] samples must be at least 1")
        return {
            "cost": cost,
            "fixture": fixture,
            "samples": samples,
            "seed": _get(n, "seed", int, "numham", 42),
            "d": _get(n, "d", int, "numham", self.d),
            "scale": _get(n, "scale", float, "numham", 3.0),
            "tol": _get(n, "tol", float, "numham", 1e-8),
        }


def _validate_shape(raw: dict) -> None:
    for name, body in raw.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{name}] must be a table")
        unknown = set(body) - _KEYS[name]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")


def parse_config(text: str, base_dir: Path | str = ".") -> Config:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    _validate_shape(raw)
    base_dir = Path(base_dir)
    problem_path = raw.get("campaign", {}).get("problem")
    if problem_path is not None:
        path = base_dir / problem_path
        if not path.is_file():
            raise ConfigError(f"problem file not found: {path}")
        inner = tomllib.loads(path.read_text())
        _validate_shape(inner)
        for name, body in inner.items():
            if name in ("campaign",):
                continue
            merged = dict(body)
            merged.update(raw.get(name, {}))
            raw[name] = merged
    digest = hashlib.sha256(text.encode()).hexdigest()
    return Config(raw=raw, source=text, digest=digest, base_dir=base_dir)


def load_config(path: str | Path) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), base_dir=path.parent)
