"""Saddle-point solves and the alternating momentum/concentration iteration.

The outer loop starts from ``C_1 = lift(c_d)`` and alternates

    U_l     <- momentum solve with the concentration C_l frozen
    C_{l+1} <- concentration solve with U_l (linear in C)

until the relative coefficient change of both fields drops below
``outer_tol``.  The momentum step is itself a Picard (or Newton) loop.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import (
    SaddleSystem,
    assemble_concentration_system,
    assemble_momentum_system,
    assemble_load,
    concentration_operator,
    divergence_matrix,
    eliminate,
    fe_data,
    momentum_residual,
    momentum_tangent,
    pressure_means,
)
from .constitutive import FluxLaw, StressLaw
from .errors import ConfigurationError, DivergenceError, LinearSolveError, NonConvergenceError
from .fespace import Field, Space, interpolate
from .varexp import EnergyReport, energy_report, field_sobolev_norm

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "iter", "res_mom", "res_conc", "dU_rel", "dC_rel",
    "E_visc", "E_stress", "E_reg", "E_grad_c",
)


@dataclass(frozen=True)
class SolverConfig:
    t: float = 8.0
    k_reg: float = 1e4
    outer_tol: float = 1e-8
    outer_maxit: int = 100
    inner_tol: float = 1e-9
    inner_maxit: int = 200
    damping: float = 1.0
    convection_on: bool = True
    degree: int = 5
    inner_method: str = "picard"

    def __post_init__(self):
        if min(self.outer_tol, self.inner_tol) <= 0:
            raise ConfigurationError("tolerances must be positive")
        if np.isfinite(self.k_reg) and self.t <= 6:
            raise ConfigurationError(f"t must exceed 6 when the regularization is active, got {self.t}")
        if self.k_reg <= 0:
            raise ConfigurationError("k_reg must be positive (use inf to disable)")
        if not 0 < self.damping <= 1:
            raise ConfigurationError("damping must lie in (0, 1]")
        if self.inner_method not in ("picard", "newton"):
            raise ConfigurationError(f"unknown inner method {self.inner_method!r}")
        if self.outer_maxit < 1 or self.inner_maxit < 1:
            raise ConfigurationError("iteration caps must be >= 1")


@dataclass
class SolutionTriple:
    U: Field
    P: Field
    C: Field


@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)
    inner: list = field(default_factory=list)
    converged: bool = False

    def append(self, **row):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([r["iter"]] + [repr(float(r[c])) for c in TRACE_COLUMNS[1:]])


# -- linear algebra ----------------------------------------------------------
def _factor(K):
    try:
        return splu(sp.csc_matrix(K), permc_spec="COLAMD")
    except RuntimeError as exc:
        K = sp.csr_matrix(K)
        diag = np.abs(K.diagonal())
        raise LinearSolveError(
            f"factorization failed ({exc}); size={K.shape[0]}, nnz={K.nnz}, "
            f"min|diag|={diag.min() if diag.size else 0:.3e}, max|diag|={diag.max() if diag.size else 0:.3e}"
        ) from None


def solve_saddle_point(system: SaddleSystem):
    """Solve ``[A, -B^T, 0; -B, 0, m; 0, m^T, 0]`` for velocity and zero-mean pressure.

    Returns ``(u, p)`` coefficient vectors.
    """
    A, B = system.A, system.Bdiv
    n, npr = A.shape[0], B.shape[0]
    if npr == 0:
        lu = _factor(A)
        return lu.solve(np.asarray(system.f, dtype=float)), np.zeros(0)
    m = sp.csr_matrix(np.asarray(system.m, dtype=float).reshape(-1, 1))
    K = sp.bmat(
        [[A, -B.T, None], [-B, None, m], [None, m.T, None]], format="csc"
    )
    rhs = np.concatenate([system.f, np.zeros(npr + 1)])
    x = _factor(K).solve(rhs)
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("saddle-point solve produced non-finite values")
    return x[:n], x[n:n + npr]


def _rel_change(new, old):
    diff = np.linalg.norm(new - old)
    scale = np.linalg.norm(new)
    if diff == 0.0:
        return 0.0
    return diff / scale if scale > 0 else np.inf


# -- momentum ----------------------------------------------------------------
def solve_momentum(
    V: Space,
    Q: Space,
    C: Field,
    law: StressLaw,
    f,
    cfg: SolverConfig,
    U0: Field | None = None,
    P0: Field | None = None,
):
    """Nonlinear momentum solve with ``C`` frozen.

    Returns ``(U, P, trace)`` where ``trace`` is a list of dicts with the
    iteration number, relative change and residual of the previous iterate.

    Raises
    ------
    NonConvergenceError
        ``inner_maxit`` reached.
    DivergenceError
        Non-finite iterate.
    """
    U = U0.copy() if U0 is not None else Field.zeros(V)
    P = P0.copy() if P0 is not None else Field.zeros(Q)
    theta = cfg.damping
    args = dict(t=cfg.t, k_reg=cfg.k_reg, convection_on=cfg.convection_on, degree=cfg.degree)
    trace = []
    for j in range(1, cfg.inner_maxit + 1):
        if cfg.inner_method == "picard":
            system = assemble_momentum_system(V, Q, C, U, law, f, **args)
            res = system.A @ U.coefficients - system.Bdiv.T @ P.coefficients - system.f
            u_new, p_new = solve_saddle_point(system)
            u_next = theta * u_new + (1 - theta) * U.coefficients
            p_next = theta * p_new + (1 - theta) * P.coefficients
        else:
            # iterates stay discretely divergence-free, so increments do too
            res, _ = momentum_residual(V, Q, C, U, P, law, f, **args)
            J = eliminate(momentum_tangent(V, Q, C, U, law, **args), V.free_mask)
            Bdiv = (divergence_matrix(fe_data(V, cfg.degree), Q) @ sp.diags(V.free_mask.astype(float))).tocsr()
            system = SaddleSystem(J, Bdiv, -res, pressure_means(Q), V.free_mask)
            du, dp = solve_saddle_point(system)
            u_next = U.coefficients + theta * du
            p_next = P.coefficients + theta * dp
        if not (np.all(np.isfinite(u_next)) and np.all(np.isfinite(p_next))):
            raise DivergenceError(f"momentum iterate {j} is not finite", trace)
        change = _rel_change(u_next, U.coefficients)
        trace.append({"iter": j, "change": change, "residual": float(np.linalg.norm(res))})
        U = Field(V, u_next)
        P = Field(Q, p_next)
        if not np.isfinite(change):
            raise DivergenceError(f"momentum iterate {j} diverged", trace)
        if change <= cfg.inner_tol:
            return U, P, trace
    raise NonConvergenceError(
        f"momentum iteration did not converge in {cfg.inner_maxit} steps "
        f"(last change {trace[-1]['change']:.3e})",
        trace,
    )


def nonlinear_momentum_residual(V, Q, C, U, P, law, f, cfg: SolverConfig):
    """``(|R|, scale)`` for the discrete momentum residual at ``(U, P)``."""
    r, load = momentum_residual(
        V, Q, C, U, P, law, f, t=cfg.t, k_reg=cfg.k_reg, convection_on=cfg.convection_on, degree=cfg.degree
    )
    return float(np.linalg.norm(r)), float(max(np.linalg.norm(load), 1.0))


# -- concentration -----------------------------------------------------------
def solve_concentration(
    Z: Space,
    U: Field,
    C_prev: Field,
    lift: Field,
    law: FluxLaw,
    source=None,
    convection_on: bool = True,
    degree: int = 5,
) -> Field:
    """One linear solve with the diffusivity frozen at ``C_prev``; returns ``lift + w``."""
    K, rhs = assemble_concentration_system(Z, U, C_prev, law, lift, source, convection_on, degree)
    w = _factor(K).solve(rhs)
    if not np.all(np.isfinite(w)):
        raise LinearSolveError("concentration solve produced non-finite values")
    return Field(Z, lift.coefficients + w)


def concentration_residual(Z, U, C, law, source=None, convection_on=True, degree=5):
    K = concentration_operator(Z, U, C, law, convection_on, degree)
    g = assemble_load(source, Z, degree)
    r = K @ C.coefficients - g
    r[~Z.free_mask] = 0.0
    return float(np.linalg.norm(r)), float(max(np.linalg.norm(g), np.linalg.norm(K @ C.coefficients), 1.0))


# -- coupled -----------------------------------------------------------------
def make_lift(Z: Space, c_d) -> Field:
    if isinstance(c_d, Field):
        return c_d.copy()
    if np.isscalar(c_d):
        value = float(c_d)
        return interpolate(Z, lambda x: np.full(len(x), value))
    return interpolate(Z, c_d)


def solve_coupled(spaces, laws, f, c_d, cfg: SolverConfig, source_c=None, U0=None):
    """Alternate momentum and concentration solves until both settle.

    Parameters
    ----------
    spaces : (V, Q, Z)
    laws : (StressLaw, FluxLaw)
    f : callable or None
        Momentum forcing at points (n, d) -> (n, d).
    c_d : callable, float or Field
        Concentration boundary datum (its nodal interpolant is the lift).
    source_c : callable, optional
        Concentration source; only used by manufactured solutions.

    Returns
    -------
    (SolutionTriple, IterationTrace)
    """
    V, Q, Z = spaces
    stress, flux = laws
    lift = make_lift(Z, c_d)
    C = lift.copy()
    U = U0.copy() if U0 is not None else Field.zeros(V)
    P = Field.zeros(Q)
    trace = IterationTrace()
    for ell in range(1, cfg.outer_maxit + 1):
        try:
            U_new, P_new, inner = solve_momentum(V, Q, C, stress, f, cfg, U0=U, P0=P)
        except NonConvergenceError as exc:
            exc.args = (f"outer iteration {ell}: {exc.args[0]}",)
            exc.trace = trace
            raise
        C_new = solve_concentration(Z, U_new, C, lift, flux, source_c, cfg.convection_on, cfg.degree)
        dU = _rel_change(U_new.coefficients, U.coefficients)
        dC = _rel_change(C_new.coefficients, C.coefficients)
        res_m, scale_m = nonlinear_momentum_residual(V, Q, C_new, U_new, P_new, stress, f, cfg)
        res_c, scale_c = concentration_residual(Z, U_new, C_new, flux, source_c, cfg.convection_on, cfg.degree)
        E = energy_report(U_new, P_new, C_new, stress, cfg.t, cfg.k_reg, cfg.degree)
        trace.append(
            iter=ell, res_mom=res_m / scale_m, res_conc=res_c / scale_c, dU_rel=dU, dC_rel=dC,
            E_visc=E.E_visc, E_stress=E.E_stress, E_reg=E.E_reg, E_grad_c=E.E_grad_c,
        )
        trace.inner.append(inner)
        log.debug("outer %d: dU=%.3e dC=%.3e inner=%d", ell, dU, dC, len(inner))
        U, P, C = U_new, P_new, C_new
        if max(dU, dC) <= cfg.outer_tol:
            trace.converged = True
            return SolutionTriple(U, P, C), trace
    raise NonConvergenceError(
        f"coupled iteration did not converge in {cfg.outer_maxit} outer steps", trace
    )


def final_energy(sol: SolutionTriple, stress: StressLaw, cfg: SolverConfig) -> EnergyReport:
    return energy_report(sol.U, sol.P, sol.C, stress, cfg.t, cfg.k_reg, cfg.degree)


# -- regularization sweep ----------------------------------------------------
@dataclass
class SweepRow:
    k: float
    E_reg: float
    dist_prev: float
    solution: SolutionTriple | None = None
    error: str | None = None


def sweep_k(spaces, laws, f, c_d, cfg: SolverConfig, ks=(1e1, 1e2, 1e3, 1e4), source_c=None):
    """Solve for each regularization parameter in ``ks``.

    ``dist_prev`` is the ``W^{1,r^-}`` norm of the velocity difference to the
    previous successful member (NaN for the first).  Failures are recorded
    per member and the sweep continues.
    """
    stress = laws[0]
    s = stress.exponent.r_minus
    rows = []
    prev = None
    for k in ks:
        member = replace(cfg, k_reg=float(k))
        try:
            sol, _ = solve_coupled(spaces, laws, f, c_d, member, source_c)
        except (NonConvergenceError, LinearSolveError) as exc:
            rows.append(SweepRow(float(k), float("nan"), float("nan"), None, str(exc)))
            continue
        E = final_energy(sol, stress, member)
        dist = float("nan") if prev is None else field_sobolev_norm(sol.U - prev.U, s)
        rows.append(SweepRow(float(k), E.E_reg, dist, sol))
        prev = sol
    return rows
