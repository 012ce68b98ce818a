"""Theta-scheme solver for second-order mean field games on the periodic torus."""

__version__ = "0.1.0"

from .grid import (
    Grid,
    divergence,
    forward_gradient,
    gradient,
    laplacian,
    norm_inf_1,
    reconstruct,
    restrict,
)
from .heat import HeatSolveOptions, solve_b1, solve_b1_vector
from .problem import (
    CflReport,
    GenericCost,
    HamiltonianEval,
    LocalCoupling,
    NonlocalCoupling,
    ProblemSpec,
    QuadraticCost,
    cfl_check,
    cfl_time_steps,
    control_bound,
    hamiltonian,
)
from .scheme import FpPerturbation, HjbResult, fp_forward, hjb_backward
from .discrete_mfg import (
    PerturbedSolution,
    TransitionModel,
    build_transition,
    dp_roll,
    fundamental_gap,
    kolmogorov_roll,
)
from .solver import MfgSolution, SolveOptions, ThetaSchemeMFG, phi, residual, solve_mfg
from .numham import NumHamiltonian, check_axioms

__all__ = [
    "Grid",
    "laplacian",
    "gradient",
    "divergence",
    "forward_gradient",
    "restrict",
    "reconstruct",
    "norm_inf_1",
    "HeatSolveOptions",
    "solve_b1",
    "solve_b1_vector",
    "CflReport",
    "GenericCost",
    "HamiltonianEval",
    "LocalCoupling",
    "NonlocalCoupling",
    "ProblemSpec",
    "QuadraticCost",
    "cfl_check",
    "cfl_time_steps",
    "control_bound",
    "hamiltonian",
    "FpPerturbation",
    "HjbResult",
    "fp_forward",
    "hjb_backward",
    "PerturbedSolution",
    "TransitionModel",
    "build_transition",
    "dp_roll",
    "fundamental_gap",
    "kolmogorov_roll",
    "MfgSolution",
    "SolveOptions",
    "ThetaSchemeMFG",
    "phi",
    "residual",
    "solve_mfg",
    "NumHamiltonian",
    "check_axioms",
]
