"""Split-variable numerical Hamiltonian and a sampled audit of its axioms.

For ``q`` in ``R^{2d}`` the slots ``q[0::2]`` hold the backward differences
(``dq``) and ``q[1::2]`` the forward ones (``qd``). With the cost written as
``l = l0 + alpha/2 |v|^2``,

    NH(q) = sup_{v >= 0, u <= 0} -<v, dq> - <u, qd> - l0(v + u) - alpha/2 (|v|^2 + |u|^2).

Evaluators are vectorized: ``x`` has shape ``(d, n)`` and ``q`` ``(2d, n)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .optim import projected_ascent
from .problem import GenericCost, QuadraticCost, RunningCost, hamiltonian

__all__ = [
    "NumHamiltonian",
    "NumHamEval",
    "AxiomResult",
    "AxiomReport",
    "check_axioms",
    "interleave",
    "split",
    "double_well_cost",
]


def split(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=float)
    return q[0::2], q[1::2]


def interleave(dq: np.ndarray, qd: np.ndarray) -> np.ndarray:
    out = np.empty((2 * dq.shape[0],) + dq.shape[1:])
    out[0::2] = dq
    out[1::2] = qd
    return out


@dataclass
class NumHamEval:
    value: np.ndarray
    v: np.ndarray  # nonnegative part, shape (d, n)
    u: np.ndarray  # nonpositive part
    converged: Optional[np.ndarray] = None

    @property
    def gradient(self) -> np.ndarray:
        """Envelope gradient ``(-v, -u)`` in interleaved slot order."""
        return interleave(-self.v, -self.u)


@dataclass(frozen=True)
class NumHamiltonian:
    cost: RunningCost
    tol: float = 1e-10
    max_iter: int = 50000
    fd_step: float = 1e-6
    strict: bool = True  # raise on inner non-convergence instead of flagging it

    @property
    def alpha(self) -> float:
        return self.cost.alpha

    def evaluate(self, s: float, x: np.ndarray, q: np.ndarray) -> NumHamEval:
        dq, qd = split(q)
        if isinstance(self.cost, QuadraticCost):
            b = self.cost.b(s, x)
            c = self.cost.c(s, x)
            v = np.maximum(0.0, -(dq + b) / self.alpha)
            u = np.minimum(0.0, -(qd + b) / self.alpha)
            value = 0.5 * self.alpha * np.sum(v * v + u * u, axis=0) - c
            return NumHamEval(value, v, u)
        return self._evaluate_iterative(s, x, dq, qd)

    def _l0(self, s, x, w):
        return self.cost.value(s, x, w) - 0.5 * self.alpha * np.sum(w * w, axis=0)

    def _l0_grad(self, s, x, w):
        return self.cost.grad(s, x, w) - self.alpha * w

    def _evaluate_iterative(self, s, x, dq, qd) -> NumHamEval:
        d = dq.shape[0]
        q = np.concatenate([dq, qd])
        x = np.broadcast_to(x, dq.shape)

        def objective(w, idx):
            v, u = w[:d], w[d:]
            xs = x[:, idx]
            lin = np.sum(v * dq[:, idx] + u * qd[:, idx], axis=0)
            return -lin - self._l0(s, xs, v + u) - 0.5 * self.alpha * np.sum(w * w, axis=0)

        def gradient(w, idx):
            v, u = w[:d], w[d:]
            g0 = self._l0_grad(s, x[:, idx], v + u)
            return np.concatenate([-dq[:, idx] - g0 - self.alpha * v, -qd[:, idx] - g0 - self.alpha * u])

        def project(w):
            return np.concatenate([np.maximum(w[:d], 0.0), np.minimum(w[d:], 0.0)])

        lip = getattr(self.cost, "lipschitz", None) or 10.0 * self.alpha
        result = projected_ascent(
            objective, gradient, project, np.zeros_like(q), 1.0 / lip, 1.0 / self.alpha, self.tol, self.max_iter
        )
        if self.strict:
            result.require("numerical Hamiltonian")
        w = result.w
        return NumHamEval(objective(w, np.arange(w.shape[1])), w[:d], w[d:], result.converged)

    def value(self, s, x, q) -> np.ndarray:
        return self.evaluate(s, x, q).value

    def gradient(self, s, x, q) -> np.ndarray:
        """Closed form for quadratic costs, central differences otherwise."""
        if isinstance(self.cost, QuadraticCost):
            return self.evaluate(s, x, q).gradient
        return fd_gradient(lambda qq: self.value(s, x, qq), q, self.fd_step)


def fd_gradient(func, q: np.ndarray, eps: float) -> np.ndarray:
    out = np.empty_like(q, dtype=float)
    for k in range(q.shape[0]):
        e = np.zeros((q.shape[0],) + (1,) * (q.ndim - 1))
        e[k] = eps
        out[k] = (func(q + e) - func(q - e)) / (2 * eps)
    return out


def double_well_cost(alpha: float = 1.0) -> GenericCost:
    """``alpha/2 |v|^2 - |v|^4 + 0.1 |v|^6``: bounded below but not convex."""

    def func(s, x, v):
        r2 = np.sum(v * v, axis=0)
        return 0.5 * alpha * r2 - r2**2 + 0.1 * r2**3

    def grad(s, x, v):
        r2 = np.sum(v * v, axis=0)
        return (alpha - 4 * r2 + 0.6 * r2**2) * v

    return GenericCost(alpha=alpha, func=func, grad_func=grad, name="double_well")


@dataclass
class AxiomResult:
    axiom: str
    samples: int
    max_violation: float
    witness_t: float
    witness_x: np.ndarray
    witness_q: np.ndarray
    passed: bool


@dataclass
class AxiomReport:
    results: list
    constants: dict = field(default_factory=dict)
    inner_failures: int = 0  # samples where the inner maximization stopped early

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, axiom: str) -> AxiomResult:
        for r in self.results:
            if r.axiom == axiom:
                return r
        raise KeyError(axiom)

    def write_csv(self, path: str | Path) -> None:
        if not self.results:
            return
        d = self.results[0].witness_x.shape[0]
        header = ["axiom", "samples", "max_violation", "witness_t"]
        header += [f"witness_x{i}" for i in range(d)] + [f"witness_q{i}" for i in range(2 * d)] + ["passed"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for r in self.results:
                row = [r.axiom, r.samples, format(r.max_violation, ".17g"), format(r.witness_t, ".17g")]
                row += [format(float(a), ".17g") for a in r.witness_x]
                row += [format(float(a), ".17g") for a in r.witness_q]
                row.append("PASS" if r.passed else "FAIL")
                writer.writerow(row)


def _result(name, violation, s, x, q, tol) -> AxiomResult:
    violation = np.where(np.isfinite(violation), violation, np.inf)
    k = int(np.argmax(violation))
    worst = float(violation[k])
    return AxiomResult(name, violation.size, max(worst, 0.0) + 0.0, float(s[k]), x[:, k].copy(), q[:, k].copy(), worst <= tol)


def check_axioms(
    numh: NumHamiltonian,
    sample_count: int = 10_000,
    rng_seed: int = 42,
    d: int = 1,
    scale: float = 3.0,
    tol: float = 1e-8,
    fd_eps: float = 1e-4,
) -> AxiomReport:
    """Sampled audit of monotonicity, consistency, regularity, convexity and growth.

    Samples come from ``numpy.random.Philox(rng_seed)``; ``q`` is uniform in
    ``[-scale, scale]^{2d}``. One time is drawn per batch.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    numh = replace(numh, strict=False)
    rng = np.random.Generator(np.random.Philox(rng_seed))
    n = sample_count
    s = float(rng.random())
    svec = np.full(n, s)
    x = rng.random((d, n))
    q = rng.uniform(-scale, scale, (2 * d, n))
    base = numh.evaluate(s, x, q)
    results = []

    # g1, monotonicity: one-sided steps along every slot
    worst = np.zeros(n)
    for k in range(2 * d):
        step = np.zeros_like(q)
        step[k] = rng.uniform(0.0, 1.0, n)
        diff = numh.value(s, x, q + step) - base.value
        worst = np.maximum(worst, diff if k % 2 == 0 else -diff)
    results.append(_result("g1", worst, svec, x, q, tol))

    # g2, consistency: diagonal points against the untruncated Hamiltonian
    p = rng.uniform(-scale, scale, (d, n))
    qdiag = interleave(p, p)
    exact = hamiltonian(numh.cost, s, x, p).value
    results.append(_result("g2", np.abs(numh.value(s, x, qdiag) - exact), svec, x, qdiag, tol))

    # g3, regularity: envelope gradient against central differences, and its Lipschitz modulus
    grad = numh.gradient(s, x, q)
    fd = fd_gradient(lambda qq: numh.value(s, x, qq), q, fd_eps)
    # central differences of a function with L-Lipschitz gradient are off by at most L eps / 2 per slot
    fd_err = np.sqrt(np.sum((grad - fd) ** 2, axis=0)) - math.sqrt(2 * d) * fd_eps / (2 * numh.alpha)
    near = q + rng.uniform(-1e-2, 1e-2, q.shape)
    dgrad = np.sqrt(np.sum((numh.gradient(s, x, near) - grad) ** 2, axis=0))
    lip_err = dgrad - np.sqrt(np.sum((near - q) ** 2, axis=0)) / numh.alpha
    results.append(_result("g3", np.maximum(fd_err, lip_err), svec, x, q, tol))

    # g4, convexity: midpoint convexity on pairs
    other = rng.uniform(-scale, scale, q.shape)
    mid = numh.value(s, x, 0.5 * (q + other))
    results.append(_result("g4", mid - 0.5 * (base.value + numh.value(s, x, other)), svec, x, q, tol))

    # g5, growth: constants fitted at q = 0, then both growth bounds on the samples
    zero = numh.evaluate(s, x, np.zeros_like(q))
    g0 = np.sqrt(np.sum(numh.gradient(s, x, np.zeros_like(q)) ** 2, axis=0))
    alpha = numh.alpha
    c1 = alpha / 4
    c2 = max(float(np.max(0.5 * alpha * g0**2 + zero.value)), 1e-12)
    c3 = 1.0 / alpha
    c4 = max(float(np.max(g0)), 1e-12)
    gnorm2 = np.sum(grad**2, axis=0)
    e1 = c1 * gnorm2 - c2 - (np.sum(grad * q, axis=0) - base.value)
    e2 = np.sqrt(gnorm2) - c3 * np.sqrt(np.sum(q**2, axis=0)) - c4
    results.append(_result("g5", np.maximum(e1, e2), svec, x, q, tol))

    failures = 0 if base.converged is None else int(np.count_nonzero(~base.converged))
    return AxiomReport(results, {"c1": c1, "c2": c2, "c3": c3, "c4": c4}, inner_failures=failures)
