"""Element-loop assembly of the discrete momentum and concentration systems.

The loops are vectorized over cells: local matrices are built with
``einsum`` at quadrature points and scattered into CSR matrices.  Fields
living on the other mesh of a :class:`~vexflow.mesh.MeshPair` are
evaluated by point location at this mesh's quadrature points.

Convection uses the skew-symmetrized forms

    B_u[v, w, h] = 1/2 int (v.grad w).h - (v.grad h).w
    B_c[b, v, z] = 1/2 int z v.grad b - b v.grad z

so both vanish when the last two arguments coincide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .constitutive import FluxLaw, StressLaw, eval_stress_derivative
from .errors import SingularViscosityError
from .fespace import Field, Space, eval_cells, eval_qp
from .mesh import Mesh, locate_points
from .quadrature import quadrature_rule

DEFAULT_DEGREE = 5


@dataclass(frozen=True, eq=False)
class FEData:
    """Basis data at the quadrature points of every cell of a space."""

    space: Space
    degree: int
    points: np.ndarray  # (nq, d+1) barycentric
    vals: np.ndarray  # (nq, nb)
    grads: np.ndarray  # (nc, nq, nb, d)
    JxW: np.ndarray  # (nc, nq)
    xq: np.ndarray  # (nc, nq, d)

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh


@lru_cache(maxsize=64)
def fe_data(space: Space, degree: int = DEFAULT_DEGREE) -> FEData:
    mesh = space.mesh
    q = quadrature_rule(mesh.dim, degree)
    vals, dvals = space.tabulate(q.points)
    grads = np.einsum("qbk,ckd->cqbd", dvals, mesh.grad_lambda)
    JxW = mesh.volumes[:, None] * (math.factorial(mesh.dim) * q.weights)[None, :]
    xq = np.einsum("qk,ckd->cqd", q.points, mesh.vertices[mesh.cells])
    return FEData(space, degree, q.points, vals, grads, JxW, xq)


@lru_cache(maxsize=64)
def _cross_locate(src: Mesh, tgt: Mesh, degree: int):
    q = quadrature_rule(tgt.dim, degree)
    xq = np.einsum("qk,ckd->cqd", q.points, tgt.vertices[tgt.cells]).reshape(-1, tgt.dim)
    return locate_points(src, xq)


def field_at(field: Field, mesh: Mesh, degree: int = DEFAULT_DEGREE):
    """Values and gradients of ``field`` at the quadrature points of ``mesh``.

    Returns ``(values (nc, nq[, ncomp]), grads (nc, nq[, ncomp], d))``.
    """
    q = quadrature_rule(mesh.dim, degree)
    if field.space.mesh is mesh:
        return eval_qp(field, q.points)
    cells, bary = _cross_locate(field.space.mesh, mesh, degree)
    v, g = eval_cells(field, cells, bary)
    nc, nq = mesh.ncells, q.npoints
    return v.reshape((nc, nq) + v.shape[1:]), g.reshape((nc, nq) + g.shape[1:])


def sym_grad(grads):
    """Symmetric part of (..., d, d) gradients."""
    return 0.5 * (grads + np.swapaxes(grads, -1, -2))


def _scatter(row_dofs, col_dofs, local, shape):
    nc, nr = row_dofs.shape
    ncol = col_dofs.shape[1]
    rows = np.broadcast_to(row_dofs[:, :, None], (nc, nr, ncol)).ravel()
    cols = np.broadcast_to(col_dofs[:, None, :], (nc, nr, ncol)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _vector_block(local):
    # (nc, d, nb, d, nb) -> (nc, d*nb, d*nb), component-major
    nc, d, nb = local.shape[:3]
    return local.reshape(nc, d * nb, d * nb)


def _block_diag(local, d):
    nc, nb, _ = local.shape
    out = np.zeros((nc, d, nb, d, nb))
    for i in range(d):
        out[:, i, :, i, :] = local
    return _vector_block(out)


def _assemble(fe: FEData, local):
    sp_ = fe.space
    dofs = sp_.cell_dofs
    return _scatter(dofs, dofs, local, (sp_.ndofs, sp_.ndofs))


# -- element blocks ----------------------------------------------------------
def viscous_matrix(fe: FEData, nu) -> sp.csr_matrix:
    """``int nu D(u):D(v)`` for a vector space; ``nu`` is (nc, nq)."""
    w = fe.JxW * nu
    G = fe.grads
    d = G.shape[-1]
    lap = np.einsum("cq,cqad,cqbd->cab", w, G, G)
    cross = np.einsum("cq,cqaj,cqbi->ciajb", w, G, G)
    local = 0.5 * cross
    for i in range(d):
        local[:, i, :, i, :] += 0.5 * lap
    return _assemble(fe, _vector_block(local))


def tangent_matrix(fe: FEData, tangent) -> sp.csr_matrix:
    """``int D(v) : T : D(u)`` with a fourth-order tensor field (nc, nq, d, d, d, d)."""
    G = fe.grads
    local = np.einsum("cq,cqal,cqiljm,cqbm->ciajb", fe.JxW, G, tangent, G)
    return _assemble(fe, _vector_block(local))


def stiffness_matrix(fe: FEData, kappa) -> sp.csr_matrix:
    """``int kappa grad u . grad v``; block diagonal for vector spaces."""
    w = fe.JxW * kappa
    local = np.einsum("cq,cqad,cqbd->cab", w, fe.grads, fe.grads)
    if fe.space.ncomp > 1:
        local = _block_diag(local, fe.space.ncomp)
    return _assemble(fe, local)


def mass_matrix(fe: FEData, weight=1.0) -> sp.csr_matrix:
    """``int weight u . v``; block diagonal for vector spaces."""
    w = fe.JxW * weight
    local = np.einsum("cq,qa,qb->cab", w, fe.vals, fe.vals)
    if fe.space.ncomp > 1:
        local = _block_diag(local, fe.space.ncomp)
    return _assemble(fe, local)


def convection_matrix(fe: FEData, wind) -> sp.csr_matrix:
    """Skew convection ``1/2 int (w.grad u) v - (w.grad v) u``; ``wind`` is (nc, nq, d).

    Row index is the test function.  Block diagonal for vector spaces, so
    the same routine serves ``B_u[W, u, v]`` and ``B_c[u, W, v]``.
    """
    wg = np.einsum("cqd,cqbd->cqb", wind, fe.grads)  # w . grad phi_b
    half = 0.5 * np.einsum("cq,qa,cqb->cab", fe.JxW, fe.vals, wg)
    local = half - np.swapaxes(half, 1, 2)
    if fe.space.ncomp > 1:
        local = _block_diag(local, fe.space.ncomp)
    return _assemble(fe, local)


def convection_jacobian(fe: FEData, U_vals, U_grads) -> sp.csr_matrix:
    """Derivative of ``B_u[U, U, v]`` in its first slot, at ``U``.

    Entry for test ``phi_a e_i`` and trial ``phi_b e_j``:
    ``1/2 int phi_b (d_j U_i phi_a - U_i d_j phi_a)``.
    """
    w, phi, G = fe.JxW, fe.vals, fe.grads
    t1 = np.einsum("cq,qb,cqij,qa->ciajb", w, phi, U_grads, phi)
    t2 = np.einsum("cq,qb,cqi,cqaj->ciajb", w, phi, U_vals, G)
    return _assemble(fe, _vector_block(0.5 * (t1 - t2)))


def weighted_vector_mass_tangent(fe: FEData, weight, U_vals) -> sp.csr_matrix:
    """``int weight (U.u)(U.v)``; tangent contribution of ``|U|^{t-2} U``."""
    w = fe.JxW * weight
    local = np.einsum("cq,cqi,qa,cqj,qb->ciajb", w, U_vals, fe.vals, U_vals, fe.vals)
    return _assemble(fe, _vector_block(local))


def divergence_matrix(feV: FEData, Q: Space) -> sp.csr_matrix:
    """``Bdiv[q, v] = int psi_q div(v)``; shape (Q.ndofs, V.ndofs)."""
    V = feV.space
    psi, _ = Q.tabulate(feV.points)  # (nq, nbq)
    # (nc, nbq, d, nb): psi_q * d_j phi_b
    local = np.einsum("cq,qp,cqbj->cpjb", feV.JxW, psi, feV.grads)
    nc, nbq, d, nb = local.shape
    return _scatter(Q.dofmap, V.cell_dofs, local.reshape(nc, nbq, d * nb), (Q.ndofs, V.ndofs))


def pressure_means(Q: Space) -> np.ndarray:
    """``m_q = int psi_q``, the mean-value constraint vector."""
    mesh = Q.mesh
    vol = mesh.volumes
    if Q.kind == "P0":
        local = vol[:, None]
    else:
        local = np.repeat(vol[:, None] / (mesh.dim + 1), Q.nlocal, axis=1)
    return np.bincount(Q.dofmap.ravel(), weights=local.ravel(), minlength=Q.ndofs)


def assemble_load(f, space: Space, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """``int f . v`` for every basis function; ``f`` maps (n, d) points to values."""
    fe = fe_data(space, degree)
    nc, nq, d = fe.xq.shape
    if f is None:
        return np.zeros(space.ndofs)
    fx = np.asarray(f(fe.xq.reshape(-1, d)), dtype=float)
    if space.ncomp > 1:
        fx = np.broadcast_to(fx, (nc * nq, space.ncomp)).reshape(nc, nq, space.ncomp)
        local = np.einsum("cq,cqi,qa->cia", fe.JxW, fx, fe.vals).reshape(nc, -1)
    else:
        fx = np.broadcast_to(fx.reshape(-1) if fx.ndim else fx, (nc * nq,)).reshape(nc, nq)
        local = np.einsum("cq,cq,qa->ca", fe.JxW, fx, fe.vals)
    return np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.ndofs)


def eliminate(A, free_mask, rhs=None):
    """Symmetric elimination of constrained dofs: zero rows/cols, unit diagonal."""
    D = sp.diags(free_mask.astype(float))
    out = (D @ A @ D + sp.diags((~free_mask).astype(float))).tocsr()
    out.sort_indices()
    if rhs is None:
        return out
    rhs = np.where(free_mask, rhs, 0.0)
    return out, rhs


# -- systems -----------------------------------------------------------------
@dataclass
class SaddleSystem:
    """``A u - Bdiv^T p = f``, ``Bdiv u = 0``, ``m . p = 0``.

    Velocity dofs on the boundary are eliminated symmetrically in ``A`` and
    ``Bdiv``.
    """

    A: sp.csr_matrix
    Bdiv: sp.csr_matrix
    f: np.ndarray
    m: np.ndarray
    free: np.ndarray | None = None


@dataclass
class MomentumOperator:
    """Unconstrained pieces of the frozen momentum operator."""

    viscous: sp.csr_matrix
    convection: sp.csr_matrix
    regularization: sp.csr_matrix
    Bdiv: sp.csr_matrix
    load: np.ndarray

    @property
    def A(self):
        return (self.viscous + self.convection + self.regularization).tocsr()


def _reg_weight(U_vals, t, k_reg):
    if not np.isfinite(k_reg):
        return None
    n2 = np.sum(U_vals * U_vals, axis=-1)
    return n2 ** ((t - 2.0) / 2.0) / k_reg


def momentum_operator(
    V: Space,
    Q: Space,
    C: Field,
    U_frozen: Field,
    law: StressLaw,
    f,
    t: float = 8.0,
    k_reg: float = np.inf,
    convection_on: bool = True,
    degree: int = DEFAULT_DEGREE,
) -> MomentumOperator:
    fe = fe_data(V, degree)
    c, _ = field_at(C, V.mesh, degree)
    u, gu = eval_qp(U_frozen, fe.points)
    Du = sym_grad(gu)
    nu = law.viscosity(c, np.sum(Du * Du, axis=(-2, -1)))
    if not np.all(np.isfinite(nu)):
        raise SingularViscosityError("non-finite viscosity at a quadrature point")
    K = viscous_matrix(fe, nu)
    n = V.ndofs
    N = convection_matrix(fe, u) if convection_on else sp.csr_matrix((n, n))
    w = _reg_weight(u, t, k_reg)
    R = mass_matrix(fe, w) if w is not None else sp.csr_matrix((n, n))
    return MomentumOperator(K, N, R, divergence_matrix(fe, Q), assemble_load(f, V, degree))


def assemble_momentum_system(
    V: Space,
    Q: Space,
    C: Field,
    U_frozen: Field,
    law: StressLaw,
    f,
    t: float = 8.0,
    k_reg: float = np.inf,
    convection_on: bool = True,
    degree: int = DEFAULT_DEGREE,
) -> SaddleSystem:
    """Picard-frozen momentum saddle system.

    ``A`` holds ``int nu(C, |D U*|) D u : D v + B_u[U*, u, v]
    + (1/k) int |U*|^(t-2) u . v`` with ``U* = U_frozen``;
    ``k_reg = inf`` drops the regularization term.
    """
    op = momentum_operator(V, Q, C, U_frozen, law, f, t, k_reg, convection_on, degree)
    free = V.free_mask
    A, rhs = eliminate(op.A, free, op.load)
    B = (op.Bdiv @ sp.diags(free.astype(float))).tocsr()
    return SaddleSystem(A, B, rhs, pressure_means(Q), free)


def momentum_tangent(
    V: Space,
    Q: Space,
    C: Field,
    U: Field,
    law: StressLaw,
    t: float = 8.0,
    k_reg: float = np.inf,
    convection_on: bool = True,
    degree: int = DEFAULT_DEGREE,
) -> sp.csr_matrix:
    """Jacobian of the nonlinear momentum operator at ``U`` (unconstrained)."""
    fe = fe_data(V, degree)
    c, _ = field_at(C, V.mesh, degree)
    u, gu = eval_qp(U, fe.points)
    T = tangent_matrix(fe, eval_stress_derivative(law, c, sym_grad(gu)))
    if convection_on:
        T = T + convection_matrix(fe, u) + convection_jacobian(fe, u, gu)
    if np.isfinite(k_reg):
        n2 = np.sum(u * u, axis=-1)
        T = T + mass_matrix(fe, n2 ** ((t - 2.0) / 2.0) / k_reg)
        if t != 2.0:
            T = T + weighted_vector_mass_tangent(fe, (t - 2.0) * n2 ** ((t - 4.0) / 2.0) / k_reg, u)
    return T.tocsr()


def momentum_residual(V, Q, C, U, P, law, f, t=8.0, k_reg=np.inf, convection_on=True, degree=DEFAULT_DEGREE):
    """Nonlinear residual ``A(U) U - Bdiv^T P - f`` on free velocity dofs."""
    op = momentum_operator(V, Q, C, U, law, f, t, k_reg, convection_on, degree)
    r = op.A @ U.coefficients - op.Bdiv.T @ P.coefficients - op.load
    r[~V.free_mask] = 0.0
    return r, op.load


def _concentration_parts(Z, U, C_frozen, law, convection_on, degree):
    fe = fe_data(Z, degree)
    u, gu = field_at(U, Z.mesh, degree)
    Du = sym_grad(gu)
    c, _ = eval_qp(C_frozen, fe.points)
    kappa = law.diffusivity(c, np.sum(Du * Du, axis=(-2, -1)))
    K = stiffness_matrix(fe, kappa)
    N = convection_matrix(fe, u) if convection_on else sp.csr_matrix(K.shape)
    return K, N


def concentration_operator(
    Z: Space,
    U: Field,
    C_frozen: Field,
    law: FluxLaw,
    convection_on: bool = True,
    degree: int = DEFAULT_DEGREE,
):
    """Unconstrained ``int kappa grad C . grad Z + B_c[C, U, Z]``."""
    K, N = _concentration_parts(Z, U, C_frozen, law, convection_on, degree)
    return (K + N).tocsr()


def assemble_concentration_system(
    Z: Space,
    U: Field,
    C_frozen: Field,
    law: FluxLaw,
    lift: Field,
    source=None,
    convection_on: bool = True,
    degree: int = DEFAULT_DEGREE,
):
    """Matrix and right-hand side for the homogeneous part ``C - lift``.

    Boundary rows are eliminated symmetrically, so the solution vanishes on
    the boundary and ``C = lift + solution``.  The constant part of the
    lift (its value at one boundary node) never touches the diffusion
    block, whose action on constants is zero, so a constant datum with no
    flow is reproduced exactly.
    """
    K, N = _concentration_parts(Z, U, C_frozen, law, convection_on, degree)
    shift = float(lift.coefficients[Z.boundary_dofs[0]]) if Z.boundary_dofs.size else 0.0
    varying = lift.coefficients - shift
    rhs = assemble_load(source, Z, degree) - K @ varying - N @ lift.coefficients
    return eliminate((K + N).tocsr(), Z.free_mask, rhs)


# -- trilinear forms ---------------------------------------------------------
def _finer(a: Mesh, b: Mesh) -> Mesh:
    return a if a.level >= b.level else b


def eval_Bu(v: Field, w: Field, h: Field, degree: int = DEFAULT_DEGREE + 1) -> float:
    """``1/2 int (v (x) h) : grad w - (v (x) w) : grad h``."""
    mesh = v.space.mesh
    q = quadrature_rule(mesh.dim, degree)
    vv, _ = eval_qp(v, q.points)
    wv, gw = eval_qp(w, q.points)
    hv, gh = eval_qp(h, q.points)
    JxW = mesh.volumes[:, None] * (math.factorial(mesh.dim) * q.weights)[None, :]
    # grads are (..., comp, deriv): (v.grad) w . h = v_i d_i w_j h_j
    integrand = np.einsum("cqi,cqji,cqj->cq", vv, gw, hv) - np.einsum(
        "cqi,cqji,cqj->cq", vv, gh, wv
    )
    return 0.5 * float(np.sum(JxW * integrand))


def eval_Bc(b: Field, v: Field, z: Field, degree: int = DEFAULT_DEGREE + 1) -> float:
    """``1/2 int z v . grad b - b v . grad z`` (integrated on the finer mesh)."""
    mesh = _finer(b.space.mesh, v.space.mesh)
    q = quadrature_rule(mesh.dim, degree)
    bv, gb = field_at(b, mesh, degree)
    vv, _ = field_at(v, mesh, degree)
    zv, gz = field_at(z, mesh, degree)
    JxW = mesh.volumes[:, None] * (math.factorial(mesh.dim) * q.weights)[None, :]
    integrand = zv * np.einsum("cqi,cqi->cq", vv, gb) - bv * np.einsum("cqi,cqi->cq", vv, gz)
    return 0.5 * float(np.sum(JxW * integrand))
