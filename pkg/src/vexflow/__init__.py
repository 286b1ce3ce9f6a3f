"""Two-level finite element solver for concentration-dependent power-law flow.

The momentum system (velocity, pressure) lives on a fluid mesh and the
concentration on an independently refined mesh of the same domain; the
two are coupled through a concentration-dependent power-law exponent and
solved by alternating fixed-point iteration.
"""
from .constitutive import (
    CertReport,
    CustomExponent,
    ExponentField,
    FluxLaw,
    StressLaw,
    certify_laws,
    constant_exponent,
    eval_exponent,
    eval_flux,
    eval_stress,
    eval_stress_derivative,
)
from .errors import (
    ConfigurationError,
    DivergenceError,
    InvalidDomainError,
    LinearSolveError,
    NonConvergenceError,
    PointNotFoundError,
    SingularViscosityError,
)
from .fespace import Field, Space, build_space, build_spaces, interpolate
from .mesh import Mesh, MeshPair, build_structured, locate_point, make_mesh_pair, refine
from .solver import (
    IterationTrace,
    SolutionTriple,
    SolverConfig,
    solve_concentration,
    solve_coupled,
    solve_momentum,
    solve_saddle_point,
    sweep_k,
)
from .varexp import energy_report, log_holder_estimate, luxembourg_norm, modular
from .verify import (
    check_min_max,
    estimate_inf_sup,
    make_mms_case,
    run_convergence_study,
)

__all__ = [
    "CertReport",
    "ConfigurationError",
    "CustomExponent",
    "DivergenceError",
    "ExponentField",
    "Field",
    "FluxLaw",
    "InvalidDomainError",
    "IterationTrace",
    "LinearSolveError",
    "Mesh",
    "MeshPair",
    "NonConvergenceError",
    "PointNotFoundError",
    "SingularViscosityError",
    "SolutionTriple",
    "SolverConfig",
    "Space",
    "StressLaw",
    "build_space",
    "build_spaces",
    "build_structured",
    "certify_laws",
    "check_min_max",
    "constant_exponent",
    "energy_report",
    "estimate_inf_sup",
    "eval_exponent",
    "eval_flux",
    "eval_stress",
    "eval_stress_derivative",
    "interpolate",
    "locate_point",
    "log_holder_estimate",
    "luxembourg_norm",
    "make_mesh_pair",
    "make_mms_case",
    "modular",
    "refine",
    "run_convergence_study",
    "solve_concentration",
    "solve_coupled",
    "solve_momentum",
    "solve_saddle_point",
    "sweep_k",
]

__version__ = "0.1.0"
