"""Manufactured solutions, convergence studies, min/max reports and inf-sup estimates.

Manufactured cases are built symbolically with sympy and turned into
vectorized numpy evaluators once, at construction.  The concentration
equation of a manufactured case carries a source term; physical runs
never do.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import sympy
from scipy.sparse.linalg import splu

from .assembly import divergence_matrix, eliminate, fe_data, mass_matrix, stiffness_matrix
from .constitutive import ExponentField, FluxLaw, StressLaw, constant_exponent
from .errors import ConfigurationError, NonConvergenceError
from .fespace import Field, Space, build_space, build_spaces, eval_qp, interpolate, zero_mean_project
from .mesh import Mesh, build_structured, make_mesh_pair
from .quadrature import quadrature_rule
from .solver import SolutionTriple, SolverConfig, final_energy, solve_coupled
from .varexp import ERROR_DEGREE, luxembourg_from_samples, magnitude, quadrature_samples

PRESETS = ("stokes2d", "coupled2d", "stokes3d", "coupled3d")


# -- manufactured solutions --------------------------------------------------
def _lambdify(syms, exprs, shape):
    """Vectorized evaluator ``x (n, d) -> (n,) + shape`` for a nested expression list."""
    flat = list(np.asarray(exprs, dtype=object).ravel())
    fn = sympy.lambdify(syms, flat, modules="numpy", cse=True)

    def evaluate(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cols = fn(*x.T)
        out = np.stack([np.broadcast_to(np.asarray(c, dtype=float), (len(x),)) for c in cols], axis=-1)
        return out.reshape((len(x),) + shape) if shape else out[:, 0]

    return evaluate


@dataclass(frozen=True)
class MMSCase:
    """Analytic solution triple with the forcing and source that produce it.

    All callables take points of shape (n, d).  ``grad_u`` returns
    (n, d, d) with ``[:, i, j] = d u_i / d x_j``.
    """

    name: str
    dim: int
    stress: StressLaw
    flux: FluxLaw
    t: float
    k_reg: float
    convection_on: bool
    u: Callable
    grad_u: Callable
    p: Callable
    c: Callable
    grad_c: Callable
    f: Callable
    g: Callable
    div_u: Callable

    def config(self, **overrides) -> SolverConfig:
        base = SolverConfig(t=self.t, k_reg=self.k_reg, convection_on=self.convection_on)
        return replace(base, **overrides)


def _stress_expr(law: StressLaw, c, D):
    r = law.exponent
    if r.is_constant:
        rc = sympy.nsimplify(r.r_minus)
    else:
        rc = r.r_plus + (r.r_minus - r.r_plus) / (1 + sympy.exp(-r.gamma * (c - r.c_mid)))
    n2 = sum(D[i, j] ** 2 for i in range(D.rows) for j in range(D.cols))
    if rc == 2:
        return law.nu0 * D
    return law.nu0 * (law.kappa1 + law.kappa2 * n2) ** ((rc - 2) / 2) * D


def _build_case(name, dim, X, u, p, c, stress, flux, t, k_reg, convection_on):
    d = dim
    grad_u = sympy.Matrix(d, d, lambda i, j: sympy.diff(u[i], X[j]))
    D = (grad_u + grad_u.T) / 2
    S = _stress_expr(stress, c, D)
    f = []
    for i in range(d):
        fi = sympy.diff(p, X[i]) - sum(sympy.diff(S[i, j], X[j]) for j in range(d))
        if convection_on:
            fi += sum(sympy.diff(u[i] * u[j], X[j]) for j in range(d))
        if math.isfinite(k_reg):
            un2 = sum(uj**2 for uj in u)
            fi += un2 ** sympy.Rational(t - 2, 2) * u[i] / k_reg if float(t).is_integer() else un2 ** ((t - 2) / 2) * u[i] / k_reg
        f.append(fi)
    n2 = sum(D[i, j] ** 2 for i in range(d) for j in range(d))
    kappa = flux.k0 + flux.k1 * n2 / (1 + n2)
    g = -sum(sympy.diff(kappa * sympy.diff(c, X[j]), X[j]) for j in range(d))
    if convection_on:
        g += sum(sympy.diff(c * u[j], X[j]) for j in range(d))
    div_u = sum(sympy.diff(u[i], X[i]) for i in range(d))
    return MMSCase(
        name=name,
        dim=dim,
        stress=stress,
        flux=flux,
        t=t,
        k_reg=k_reg,
        convection_on=convection_on,
        u=_lambdify(X, list(u), (d,)),
        grad_u=_lambdify(X, grad_u.tolist(), (d, d)),
        p=_lambdify(X, [p], ()),
        c=_lambdify(X, [c], ()),
        grad_c=_lambdify(X, [sympy.diff(c, xj) for xj in X], (d,)),
        f=_lambdify(X, f, (d,)),
        g=_lambdify(X, [g], ()),
        div_u=_lambdify(X, [div_u], ()),
    )


def _fields(dim, amplitude):
    pi = sympy.pi
    if dim == 2:
        x, y = X = sympy.symbols("x y", real=True)
        psi = amplitude * sympy.sin(pi * x) ** 2 * sympy.sin(pi * y) ** 2 / pi
        u = [sympy.diff(psi, y), -sympy.diff(psi, x)]
        p = sympy.cos(pi * x) * sympy.cos(pi * y)
        c = sympy.Rational(1, 4) + x / 2 + 2 * x * (1 - x) * y * (1 - y)
        return X, u, p, c
    if dim == 3:
        x, y, z = X = sympy.symbols("x y z", real=True)
        phi = amplitude * 64 * (x * (1 - x) * y * (1 - y) * z * (1 - z)) ** 2
        # u = curl(phi (1, 1, 1))
        u = [
            sympy.diff(phi, y) - sympy.diff(phi, z),
            sympy.diff(phi, z) - sympy.diff(phi, x),
            sympy.diff(phi, x) - sympy.diff(phi, y),
        ]
        p = sympy.cos(pi * x) * sympy.cos(pi * y) * sympy.cos(pi * z)
        c = sympy.Rational(1, 4) + x / 2 + 8 * x * (1 - x) * y * (1 - y) * z * (1 - z)
        return X, u, p, c
    raise InvalidPreset(f"dimension {dim} has no presets")


class InvalidPreset(ConfigurationError):
    pass


def make_mms_case(
    preset: str,
    stress: StressLaw | None = None,
    flux: FluxLaw | None = None,
    t: float | None = None,
    k_reg: float | None = None,
    amplitude: float | None = None,
) -> MMSCase:
    """Manufactured case from the preset catalog.

    ``stokes2d``/``stokes3d``: r = 2, no convection, no regularization, and
    a Poisson problem for the concentration.  ``coupled2d``/``coupled3d``:
    logistic r in [1.6, 2.4] over the concentration range, convection on,
    regularization ``k = 1e4`` with ``t = 8``.  Law parameters may be
    overridden.

    Raises
    ------
    InvalidPreset
        Unknown preset name.
    """
    if preset not in PRESETS:
        raise InvalidPreset(f"unknown preset {preset!r}; choose one of {PRESETS}")
    dim = int(preset[-2])
    if preset.startswith("stokes"):
        stress = stress or StressLaw(exponent=constant_exponent(2.0))
        flux = flux or FluxLaw(1.0, 0.0)
        t = 8.0 if t is None else t
        k_reg = math.inf if k_reg is None else k_reg
        convection_on = False
        amplitude = 1.0 if amplitude is None else amplitude
    else:
        stress = stress or StressLaw(exponent=ExponentField(1.6, 2.4, gamma=8.0, c_mid=0.5))
        flux = flux or FluxLaw(1.0, 0.5)
        t = 8.0 if t is None else t
        k_reg = 1e4 if k_reg is None else k_reg
        convection_on = True
        amplitude = 0.5 if amplitude is None else amplitude
    X, u, p, c = _fields(dim, amplitude)
    return _build_case(preset, dim, X, u, p, c, stress, flux, t, k_reg, convection_on)


# -- error norms -------------------------------------------------------------
def _samples(field: Field, degree):
    mesh = field.space.mesh
    xq, JxW = quadrature_samples(mesh, degree)
    v, g = eval_qp(field, quadrature_rule(mesh.dim, degree).points)
    return xq, JxW, v, g


def _at(func, xq):
    nc, nq, d = xq.shape
    out = func(xq.reshape(-1, d))
    return out.reshape((nc, nq) + out.shape[1:])


@dataclass(frozen=True)
class LevelErrors:
    level: int
    h: float
    err_u_W1rm: float
    err_u_lux: float
    err_p: float
    err_c_W12: float
    err_c_L2: float


def compute_errors(case: MMSCase, U: Field, P: Field, C: Field, level: int = 0, degree: int = ERROR_DEGREE) -> LevelErrors:
    """Errors of a discrete triple against the analytic fields.

    Velocity: ``W^{1,r^-}`` norm and the Luxembourg ``W^{1,r(c)}`` norm
    (sum of the Luxembourg norms of the error and its gradient, with ``c``
    the analytic concentration).  Pressure: ``L^{(r^+)'}``.
    Concentration: ``W^{1,2}`` and ``L^2``.
    """
    law = case.stress.exponent
    s = law.r_minus
    xq, JxW, u, gu = _samples(U, degree)
    eu = magnitude(u - _at(case.u, xq))
    eg = magnitude(gu - _at(case.grad_u, xq))
    w1 = float(np.sum(JxW * (eu**s + eg**s)) ** (1.0 / s))
    r = law(_at(case.c, xq))
    lux = luxembourg_from_samples(eu, r, JxW).value + luxembourg_from_samples(eg, r, JxW).value
    _, _, pv, _ = _samples(P, degree)
    rp = law.r_plus / (law.r_plus - 1.0)
    ep = float(np.sum(JxW * np.abs(pv - _at(case.p, xq)) ** rp) ** (1.0 / rp))
    xc, Jc, c, gc = _samples(C, degree)
    ec = np.abs(c - _at(case.c, xc))
    egc = magnitude(gc - _at(case.grad_c, xc))
    l2 = float(np.sqrt(np.sum(Jc * ec**2)))
    h1 = float(np.sqrt(np.sum(Jc * (ec**2 + egc**2))))
    return LevelErrors(level, U.space.mesh.h, w1, lux, ep, h1, l2)


def _eoc(e, h):
    e, h = np.asarray(e, dtype=float), np.asarray(h, dtype=float)
    out = np.full(len(e), np.nan)
    out[1:] = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    return out


EOC_COLUMNS = (
    "level", "h", "err_u_W1rm", "err_u_lux", "err_p", "err_c_W12", "err_c_L2",
    "eoc_u", "eoc_p", "eoc_c",
)


@dataclass
class EOCTable:
    rows: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    complete: bool = True
    message: str = ""

    def column(self, name) -> np.ndarray:
        if name.startswith("eoc_"):
            key = {"eoc_u": "err_u_W1rm", "eoc_p": "err_p", "eoc_c": "err_c_W12"}[name]
            return _eoc(self.column(key), self.column("h"))
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def records(self):
        cols = {name: self.column(name) for name in EOC_COLUMNS}
        return [{name: cols[name][i] for name in EOC_COLUMNS} for i in range(len(self.rows))]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EOC_COLUMNS)
        for rec in self.records():
            w.writerow([int(rec["level"])] + [repr(float(rec[c])) for c in EOC_COLUMNS[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_text(self) -> str:
        lines = ["  ".join(f"{c:>11s}" for c in EOC_COLUMNS)]
        for rec in self.records():
            lines.append(
                f"{int(rec['level']):>11d}  " + "  ".join(f"{rec[c]:11.4e}" for c in EOC_COLUMNS[1:])
            )
        return "\n".join(lines) + "\n"


def default_base_mesh(dim: int) -> Mesh:
    return build_structured(dim, [1] * dim, [(0.0, 1.0)] * dim)


def run_convergence_study(
    case: MMSCase,
    levels,
    cfg: SolverConfig | None = None,
    pair=("VectorP2", "P0"),
    base: Mesh | None = None,
    conc_offset: int = 0,
    interpolate_only: bool = False,
    keep_solutions: bool = False,
) -> EOCTable:
    """Solve the manufactured problem on successive refinement levels.

    Parameters
    ----------
    levels : int or sequence of int
        Fluid mesh levels; an integer ``n`` means ``1..n``.
    conc_offset : int
        Concentration mesh level relative to the fluid level.
    interpolate_only : bool
        Skip the solve and measure nodal interpolants of the analytic
        fields (isolates approximation from the solver).

    A level that fails to converge ends the study; the partial table is
    returned with ``complete = False``.
    """
    if isinstance(levels, int):
        levels = list(range(1, levels + 1))
    cfg = cfg or case.config()
    base = base or default_base_mesh(case.dim)
    table = EOCTable()
    for lev in levels:
        mp = make_mesh_pair(base, lev, max(lev + conc_offset, 0))
        V, Q, Z = build_spaces(mp, *pair)
        if interpolate_only:
            U = interpolate(V, case.u)
            P = zero_mean_project(interpolate(Q, case.p))
            C = interpolate(Z, case.c)
            trace = None
        else:
            try:
                sol, trace = solve_coupled(
                    (V, Q, Z), (case.stress, case.flux), case.f, case.c, cfg, source_c=case.g
                )
            except NonConvergenceError as exc:
                table.complete = False
                table.message = f"level {lev}: {exc}"
                break
            U, P, C = sol.U, sol.P, sol.C
        table.rows.append(compute_errors(case, U, P, C, lev))
        table.energies.append(final_energy(SolutionTriple(U, P, C), case.stress, cfg))
        table.traces.append(trace)
        if keep_solutions:
            table.solutions.append(SolutionTriple(U, P, C))
    return table


# -- min/max principle -------------------------------------------------------
@dataclass(frozen=True)
class MinMaxReport:
    c_minus: float
    c_plus: float
    min_C: float
    max_C: float
    violation: float

    def to_text(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in self.__dict__.items())


def check_min_max(C: Field, c_d, mesh: Mesh | None = None) -> MinMaxReport:
    """Compare nodal values of ``C`` with the range of the boundary datum.

    ``c_d`` is evaluated at the boundary nodes of ``C``'s space (a constant
    is accepted).  No tolerance is applied.
    """
    Z = C.space
    if mesh is not None and mesh is not Z.mesh:
        raise ValueError("C must live on the given mesh")
    xb = Z.nodes[Z.boundary_scalar]
    if callable(c_d):
        vals = np.asarray(c_d(xb), dtype=float).reshape(-1)
    else:
        vals = np.full(len(xb), float(c_d))
    c_minus, c_plus = float(vals.min()), float(vals.max())
    lo, hi = float(C.coefficients.min()), float(C.coefficients.max())
    violation = max(0.0, c_minus - lo, hi - c_plus)
    return MinMaxReport(c_minus, c_plus, lo, hi, violation)


# -- inf-sup -----------------------------------------------------------------
def _mean_zero_basis(m):
    """Orthonormal basis of the complement of ``m`` (columns)."""
    m = np.asarray(m, dtype=float)
    return la.null_space(m[None, :])


KERNEL_RTOL = 1e-10


def schur_pencil(V: Space, Q: Space):
    """``(S, M)`` restricted to mean-zero pressures (dense).

    ``S = B A^{-1} B^T`` with ``A`` the velocity ``H^1_0`` seminorm Gram
    matrix; ``M`` is the pressure mass matrix.
    """
    if V.mesh is not Q.mesh:
        raise ValueError("V and Q must live on the same mesh")
    feV = fe_data(V, 4)
    feQ = fe_data(Q, 4)
    free = V.free_mask
    A = eliminate(stiffness_matrix(feV, 1.0), free)
    B = (divergence_matrix(feV, Q) @ sp.diags(free.astype(float))).tocsc()
    M = mass_matrix(feQ, 1.0).toarray()
    S = B @ splu(sp.csc_matrix(A)).solve(B.T.toarray())
    S = 0.5 * (S + S.T)
    N = _mean_zero_basis(M @ np.ones(Q.ndofs))
    if N.shape[1] == 0:
        raise ValueError("pressure space has no mean-zero functions")
    return N.T @ S @ N, N.T @ M @ N


def estimate_inf_sup(
    V: Space,
    Q: Space,
    mode: str = "full",
    maxit: int = 500,
    tol: float = 1e-10,
    block: int = 4,
    seed: int = 0,
    return_iterations: bool = False,
):
    """Discrete inf-sup constant of the pair ``(V, Q)``.

    ``beta^2`` is the smallest eigenvalue of ``S x = lam M x`` on mean-zero
    pressures (see :func:`schur_pencil`), computed by block inverse
    iteration with Rayleigh-Ritz from a seeded start block.

    ``mode="full"`` returns 0 when ``S`` is singular (spurious pressure
    modes).  ``mode="reduced"`` is a diagnostic for such pairs: the
    eigenvalues below ``KERNEL_RTOL`` times the largest are treated as the
    spurious kernel and ``beta`` is taken over its complement, which shows
    how the surviving modes degrade under refinement.  It uses a dense
    generalized eigensolver.

    Raises
    ------
    NonConvergenceError
        Residual above ``tol`` after ``maxit`` iterations.
    """
    if mode not in ("full", "reduced"):
        raise ConfigurationError(f"unknown inf-sup mode {mode!r}")
    Sr, Mr = schur_pencil(V, Q)
    n = Sr.shape[0]
    if mode == "reduced":
        w = la.eigh(Sr, Mr, eigvals_only=True)
        w = w[w > KERNEL_RTOL * w.max()] if w.max() > 0 else w[:0]
        beta = math.sqrt(w[0]) if w.size else 0.0
        return (beta, 1) if return_iterations else beta
    # spurious modes make the reduced Schur complement singular
    scale = np.abs(np.diag(Mr)).max() * np.linalg.norm(Sr, 2) / np.linalg.norm(Mr, 2)
    try:
        Sf = la.cho_factor(Sr)
        if np.diag(Sf[0]).min() ** 2 <= KERNEL_RTOL * scale:
            raise la.LinAlgError
    except la.LinAlgError:
        return (0.0, 0) if return_iterations else 0.0
    k = min(block, n)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    lam_old = None
    for it in range(1, maxit + 1):
        X = la.cho_solve(Sf, Mr @ X)
        # Rayleigh-Ritz on span(X)
        Sx, Mx = X.T @ Sr @ X, X.T @ Mr @ X
        w, Y = la.eigh(0.5 * (Sx + Sx.T), 0.5 * (Mx + Mx.T))
        X = X @ Y
        lam = w[0]
        x = X[:, 0]
        res = np.linalg.norm(Sr @ x - lam * (Mr @ x)) / (abs(lam) * np.linalg.norm(Mr @ x))
        if res <= tol or (lam_old is not None and abs(lam - lam_old) <= 1e-15 * abs(lam)):
            beta = math.sqrt(max(lam, 0.0))
            return (beta, it) if return_iterations else beta
        lam_old = lam
        X /= np.linalg.norm(X, axis=0)
    raise NonConvergenceError(f"inf-sup iteration did not converge in {maxit} steps (residual {res:.3e})")


def inf_sup_levels(
    dim: int,
    levels,
    velocity_kind="VectorP2",
    pressure_kind="P0",
    base: Mesh | None = None,
    seed: int = 0,
    mode: str = "full",
):
    """``[(level, h, beta)]`` over uniform refinements of ``base``."""
    base = base or default_base_mesh(dim)
    out = []
    for lev in levels:
        mesh = make_mesh_pair(base, lev, lev).fluid
        V = build_space(mesh, velocity_kind)
        Q = build_space(mesh, pressure_kind)
        out.append((lev, mesh.h, estimate_inf_sup(V, Q, mode=mode, seed=seed)))
    return out
