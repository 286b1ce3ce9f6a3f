"""Variable-exponent modulars, Luxembourg norms and energy diagnostics.

For an exponent field ``r(x)`` the modular of ``f`` is
``rho(f) = int |f(x)|^r(x) dx`` and the Luxembourg norm is the smallest
``lam > 0`` with ``rho(f / lam) <= 1``.  Everything here reduces to
sampled values at quadrature points: magnitudes ``|f|``, exponents and
weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import field_at, sym_grad
from .constitutive import StressLaw, eval_stress
from .fespace import Field, eval_cells, eval_qp
from .mesh import Mesh
from .quadrature import quadrature_rule

ERROR_DEGREE = 7


@dataclass(frozen=True)
class LuxNormResult:
    value: float
    iterations: int
    modular: float


@dataclass(frozen=True)
class EnergyReport:
    E_visc: float
    E_stress: float
    E_reg: float
    E_grad_c: float

    def as_row(self):
        return [self.E_visc, self.E_stress, self.E_reg, self.E_grad_c]


def quadrature_samples(mesh: Mesh, degree: int = ERROR_DEGREE):
    """Physical quadrature points (nc, nq, d) and weights (nc, nq)."""
    q = quadrature_rule(mesh.dim, degree)
    xq = np.einsum("qk,ckd->cqd", q.points, mesh.vertices[mesh.cells])
    JxW = mesh.volumes[:, None] * (math.factorial(mesh.dim) * q.weights)[None, :]
    return xq, JxW


def magnitude(values, lead: int = 2) -> np.ndarray:
    """Euclidean/Frobenius magnitude over all trailing axes past ``lead``."""
    values = np.asarray(values, dtype=float)
    if values.ndim <= lead:
        return np.abs(values)
    axes = tuple(range(lead, values.ndim))
    return np.sqrt(np.sum(values * values, axis=axes))


def _sample(f, exponent, mesh, degree):
    xq, JxW = quadrature_samples(mesh, degree)
    nc, nq, d = xq.shape
    pts = xq.reshape(-1, d)
    if isinstance(f, Field):
        vals, _ = field_at(f, mesh, degree)
    else:
        vals = np.asarray(f(pts), dtype=float)
        vals = vals.reshape((nc, nq) + vals.shape[1:])
    absf = magnitude(vals)
    if callable(exponent):
        r = np.broadcast_to(np.asarray(exponent(pts), dtype=float), (nc * nq,)).reshape(nc, nq)
    else:
        r = np.broadcast_to(np.asarray(exponent, dtype=float), (nc, nq))
    return absf, r, JxW


def modular_from_samples(absf, r, weights) -> float:
    absf = np.asarray(absf, dtype=float)
    if not np.all(np.isfinite(absf)):
        raise ValueError("non-finite integrand values")
    pos = absf > 0
    return float(np.sum(weights[pos] * absf[pos] ** r[pos]))


def modular(f, exponent, mesh: Mesh, degree: int = ERROR_DEGREE) -> float:
    """Quadrature approximation of ``int |f(x)|^r(x) dx``.

    Parameters
    ----------
    f : callable or Field
        Maps (n, d) points to scalar, vector or tensor values; magnitudes
        use the Euclidean/Frobenius norm.
    exponent : callable or float
        ``r(x)`` at points, already composed with any concentration.
    """
    return modular_from_samples(*_sample(f, exponent, mesh, degree))


def luxembourg_from_samples(absf, r, weights, rtol: float = 1e-12) -> LuxNormResult:
    absf = np.asarray(absf, dtype=float)
    if not np.all(np.isfinite(absf)):
        raise ValueError("non-finite integrand values")
    pos = absf > 0
    if not np.any(pos):
        return LuxNormResult(0.0, 0, 0.0)
    logf, rr, w = np.log(absf[pos]), r[pos], weights[pos]

    def rho(lam):
        return float(np.sum(w * np.exp(rr * (logf - math.log(lam)))))

    it = 0
    lo, hi = 1e-12, 1.0
    while rho(hi) > 1.0:
        lo, hi = hi, 2.0 * hi
        it += 1
        if hi > 1e30:
            raise OverflowError("Luxembourg norm bracket exceeded 1e30")
    while rho(lo) <= 1.0:
        hi, lo = lo, 0.5 * lo
        it += 1
        if lo < 1e-300:
            return LuxNormResult(hi, it, rho(hi))
    # rho(lo) > 1 >= rho(hi)
    while hi - lo > rtol * hi:
        mid = math.sqrt(lo * hi) if hi > 2.0 * lo else 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if rho(mid) > 1.0:
            lo = mid
        else:
            hi = mid
        it += 1
    return LuxNormResult(hi, it, rho(hi))


def luxembourg_norm(f, exponent, mesh: Mesh, degree: int = ERROR_DEGREE, rtol: float = 1e-12) -> LuxNormResult:
    """``inf {lam > 0 : rho(f / lam) <= 1}`` by bracketing and bisection."""
    return luxembourg_from_samples(*_sample(f, exponent, mesh, degree), rtol=rtol)


def lebesgue_norm(absf, weights, s: float) -> float:
    return float(np.sum(weights * np.asarray(absf) ** s) ** (1.0 / s))


def sobolev_norm(vals, grads, weights, s: float) -> float:
    """``(int |e|^s + |grad e|^s)^(1/s)`` from samples at quadrature points."""
    return float(
        np.sum(weights * (magnitude(vals) ** s + magnitude(grads) ** s)) ** (1.0 / s)
    )


def field_sobolev_norm(field: Field, s: float, degree: int = ERROR_DEGREE) -> float:
    _, JxW = quadrature_samples(field.space.mesh, degree)
    q = quadrature_rule(field.space.mesh.dim, degree)
    v, g = eval_qp(field, q.points)
    return sobolev_norm(v, g, JxW, s)


def energy_report(U: Field, P: Field, C: Field, stress: StressLaw, t: float = 8.0, k_reg: float = np.inf, degree: int = 5) -> EnergyReport:
    """Energy integrals on the fluid mesh, with C evaluated cross-mesh.

    ``E_visc = int |DU|^r(C)``, ``E_stress = int |S(C, DU)|^r'(C)``,
    ``E_reg = (1/k) int |U|^t``, ``E_grad_c = int |grad C|^2``.
    """
    mesh = U.space.mesh
    _, JxW = quadrature_samples(mesh, degree)
    q = quadrature_rule(mesh.dim, degree)
    u, gu = eval_qp(U, q.points)
    c, gc = field_at(C, mesh, degree)
    Du = sym_grad(gu)
    r = stress.exponent(c)
    rc = r / (r - 1.0)
    nD = magnitude(Du)
    S = eval_stress(stress, c, Du)
    nS = magnitude(S)
    E_visc = modular_from_samples(nD, r, JxW)
    E_stress = modular_from_samples(nS, rc, JxW)
    if np.isfinite(k_reg):
        E_reg = modular_from_samples(magnitude(u), np.full_like(r, t), JxW) / k_reg
    else:
        E_reg = 0.0
    E_grad_c = float(np.sum(JxW * np.sum(gc * gc, axis=-1)))
    return EnergyReport(E_visc, E_stress, E_reg, E_grad_c)


def _random_points(mesh: Mesh, n: int, rng):
    cells = rng.choice(mesh.ncells, size=n, p=mesh.volumes / mesh.volumes.sum())
    bary = rng.dirichlet(np.ones(mesh.dim + 1), size=n)
    x = np.einsum("nk,nkd->nd", bary, mesh.vertices[mesh.cells[cells]])
    return cells, bary, x


def log_holder_estimate(exponent, C: Field, n_pairs: int = 10_000, seed: int = 0) -> float:
    """Empirical lower bound for the log-Hoelder constant of ``r(C(x))``.

    Max over sampled pairs with ``0 < |x - y| <= 1/2`` of
    ``|r(x) - r(y)| * (-log |x - y|)``.
    """
    mesh = C.space.mesh
    rng = np.random.default_rng(seed)
    cx, bx, x = _random_points(mesh, n_pairs, rng)
    cy, by, y = _random_points(mesh, n_pairs, rng)
    rx = exponent(eval_cells(C, cx, bx)[0])
    ry = exponent(eval_cells(C, cy, by)[0])
    dist = np.linalg.norm(x - y, axis=1)
    keep = (dist > 0) & (dist <= 0.5)
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(rx - ry)[keep] * -np.log(dist[keep])))
