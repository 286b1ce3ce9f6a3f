"""Lagrange finite element spaces on simplicial meshes.

Velocity: ``VectorP2`` or ``VectorP2Bubble`` (plus ``VectorP1``, kept only
as a known-unstable inf-sup discriminator).  Pressure: ``P0`` or
``P1Discontinuous``.  Concentration: ``ScalarP1``.

All bases are written in barycentric coordinates, so one code path serves
triangles and tetrahedra.  Vector fields store their components blocked:
global dof ``comp * nscalar + s``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError
from .mesh import Mesh, MeshPair, locate_points
from .quadrature import quadrature_rule

VELOCITY_KINDS = ("VectorP2", "VectorP2Bubble", "VectorP1")
PRESSURE_KINDS = ("P0", "P1Discontinuous")
SCALAR_KINDS = ("ScalarP1",)
SUPPORTED_PAIRS = {("VectorP2", "P0"), ("VectorP2Bubble", "P1Discontinuous")}


# -- reference bases ---------------------------------------------------------
def _tabulate(kind, dim, lam):
    """Basis values and barycentric derivatives at points ``lam`` (n, d+1).

    Returns ``(vals (n, nb), dvals (n, nb, d+1))``.
    """
    n, m = lam.shape
    if kind == "P0":
        return np.ones((n, 1)), np.zeros((n, 1, m))
    if kind in ("P1", "P1Discontinuous"):
        return lam.copy(), np.broadcast_to(np.eye(m), (n, m, m)).copy()
    if kind in ("P2", "P2Bubble"):
        pairs = list(itertools.combinations(range(m), 2))
        nb = m + len(pairs) + (kind == "P2Bubble")
        vals = np.empty((n, nb))
        dvals = np.zeros((n, nb, m))
        for i in range(m):
            vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
            dvals[:, i, i] = 4.0 * lam[:, i] - 1.0
        for k, (i, j) in enumerate(pairs):
            vals[:, m + k] = 4.0 * lam[:, i] * lam[:, j]
            dvals[:, m + k, i] = 4.0 * lam[:, j]
            dvals[:, m + k, j] = 4.0 * lam[:, i]
        if kind == "P2Bubble":
            # scaled to 1 at the centroid
            c = float(m) ** m
            vals[:, -1] = c * np.prod(lam, axis=1)
            for i in range(m):
                dvals[:, -1, i] = c * np.prod(np.delete(lam, i, axis=1), axis=1)
        return vals, dvals
    raise ConfigurationError(f"unknown element {kind!r}")


_SCALAR_ELEMENT = {
    "VectorP2": "P2",
    "VectorP2Bubble": "P2Bubble",
    "VectorP1": "P1",
    "ScalarP1": "P1",
    "P0": "P0",
    "P1Discontinuous": "P1Discontinuous",
}


@dataclass(frozen=True, eq=False)
class Space:
    """A finite element space on one mesh.

    Attributes
    ----------
    mesh : Mesh
    kind : str
    ncomp : int
        1 for scalar spaces, ``mesh.dim`` for velocity spaces.
    dofmap : (nc, nb) int array
        Cell to scalar dof indices.
    nodes : (nscalar, d) float array
        Nodal points of the scalar dofs.
    """

    mesh: Mesh
    kind: str
    ncomp: int
    dofmap: np.ndarray
    nodes: np.ndarray
    boundary_scalar: np.ndarray

    @property
    def element(self) -> str:
        return _SCALAR_ELEMENT[self.kind]

    @property
    def nscalar(self) -> int:
        return len(self.nodes)

    @property
    def ndofs(self) -> int:
        return self.ncomp * self.nscalar

    @property
    def nlocal(self) -> int:
        return self.dofmap.shape[1]

    @property
    def continuous(self) -> bool:
        return self.kind not in PRESSURE_KINDS

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        """Global dofs whose nodal points lie on the boundary (all components)."""
        b = self.boundary_scalar
        return np.concatenate([c * self.nscalar + b for c in range(self.ncomp)])

    @cached_property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.ndofs, dtype=bool)
        mask[self.boundary_dofs] = False
        return mask

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        """(nc, ncomp*nb) global dofs per cell, component-major."""
        return np.concatenate(
            [c * self.nscalar + self.dofmap for c in range(self.ncomp)], axis=1
        )

    def tabulate(self, lam):
        return _tabulate(self.element, self.mesh.dim, np.atleast_2d(lam))

    def __repr__(self):
        return f"Space({self.kind}, ndofs={self.ndofs}, ncells={self.mesh.ncells})"


def build_space(mesh: Mesh, kind: str) -> Space:
    """Dof numbering: vertices, then edges, then cell interiors."""
    d = mesh.dim
    nv, nc = mesh.nvertices, mesh.ncells
    ncomp = d if kind in VELOCITY_KINDS else 1
    bverts = mesh.boundary_vertices
    if kind in ("VectorP1", "ScalarP1"):
        dofmap = mesh.cells.copy()
        nodes = mesh.vertices
        bnd = bverts
    elif kind in ("VectorP2", "VectorP2Bubble"):
        ne = len(mesh.edges)
        dofmap = np.concatenate([mesh.cells, nv + mesh.cell_edges], axis=1)
        nodes = np.concatenate(
            [mesh.vertices, 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])]
        )
        f = mesh.boundary_facets
        bedges = [mesh.edge_index(f[:, i], f[:, j]) for i, j in itertools.combinations(range(d), 2)]
        bnd = np.unique(np.concatenate([bverts, nv + np.concatenate(bedges)]))
        if kind == "VectorP2Bubble":
            dofmap = np.concatenate([dofmap, (nv + ne + np.arange(nc))[:, None]], axis=1)
            nodes = np.concatenate([nodes, mesh.centroids])
    elif kind == "P0":
        dofmap = np.arange(nc)[:, None]
        nodes = mesh.centroids
        bnd = np.zeros(0, dtype=np.int64)
    elif kind == "P1Discontinuous":
        dofmap = np.arange(nc * (d + 1)).reshape(nc, d + 1)
        nodes = mesh.vertices[mesh.cells].reshape(-1, d)
        onb = np.zeros(nv, dtype=bool)
        onb[bverts] = True
        bnd = np.flatnonzero(onb[mesh.cells.ravel()])
    else:
        raise ConfigurationError(f"unknown space kind {kind!r}")
    return Space(mesh, kind, ncomp, dofmap, np.asarray(nodes, dtype=float), np.asarray(bnd, dtype=np.int64))


def build_spaces(pair: MeshPair, velocity_kind="VectorP2", pressure_kind="P0"):
    """Velocity and pressure spaces on the fluid mesh, ScalarP1 on the concentration mesh.

    Raises
    ------
    ConfigurationError
        If the element pair is not one of the supported stable pairs.
    """
    if (velocity_kind, pressure_kind) not in SUPPORTED_PAIRS:
        raise ConfigurationError(
            f"unsupported element pair ({velocity_kind}, {pressure_kind}); "
            f"choose one of {sorted(SUPPORTED_PAIRS)}"
        )
    V = build_space(pair.fluid, velocity_kind)
    Q = build_space(pair.fluid, pressure_kind)
    Z = build_space(pair.conc, "ScalarP1")
    return V, Q, Z


# -- fields --------------------------------------------------------------
@dataclass(eq=False)
class Field:
    """Coefficient vector bound to a space."""

    space: Space
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.ndofs,):
            raise ValueError(
                f"expected {self.space.ndofs} coefficients, got {self.coefficients.shape}"
            )

    @classmethod
    def zeros(cls, space: Space) -> "Field":
        return cls(space, np.zeros(space.ndofs))

    def copy(self) -> "Field":
        return Field(self.space, self.coefficients.copy())

    @property
    def components(self) -> np.ndarray:
        """(ncomp, nscalar) view of the coefficients."""
        return self.coefficients.reshape(self.space.ncomp, self.space.nscalar)

    def __add__(self, other):
        return Field(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other):
        return Field(self.space, self.coefficients - other.coefficients)

    def __mul__(self, a):
        return Field(self.space, a * self.coefficients)

    __rmul__ = __mul__


def _physical_gradients(mesh, cells, dvals):
    # dvals (..., nb, d+1) with leading axis matching ``cells``
    G = mesh.grad_lambda[cells]
    return np.einsum("nbk,nkd->nbd", dvals, G)


def eval_cells(field: Field, cells, bary):
    """Values and gradients at one barycentric point per listed cell.

    Returns
    -------
    values : (n,) or (n, ncomp)
    grads : (n, d) or (n, ncomp, d)
    """
    sp = field.space
    cells = np.asarray(cells, dtype=np.int64)
    if cells.size and (cells.min() < 0 or cells.max() >= sp.mesh.ncells):
        raise IndexError("cell index out of range")
    vals, dvals = sp.tabulate(np.asarray(bary, dtype=float).reshape(len(cells), -1))
    grads = _physical_gradients(sp.mesh, cells, dvals)
    local = field.components[:, sp.dofmap[cells]]  # (ncomp, n, nb)
    v = np.einsum("cnb,nb->nc", local, vals)
    g = np.einsum("cnb,nbd->ncd", local, grads)
    if sp.ncomp == 1:
        return v[:, 0], g[:, 0]
    return v, g


def eval_qp(field: Field, bary):
    """Values/gradients at the same barycentric points in every cell.

    Returns ``(values (nc, nq[, ncomp]), grads (nc, nq[, ncomp], d))``.
    """
    sp = field.space
    vals, dvals = sp.tabulate(bary)
    G = sp.mesh.grad_lambda
    grads = np.einsum("qbk,ckd->cqbd", dvals, G)
    local = field.components[:, sp.dofmap]  # (ncomp, nc, nb)
    v = np.einsum("kcb,qb->cqk", local, vals)
    g = np.einsum("kcb,cqbd->cqkd", local, grads)
    if sp.ncomp == 1:
        return v[..., 0], g[..., 0, :]
    return v, g


def evaluate_field(field: Field, cell: int, barycentric):
    """Value and physical gradient of ``field`` at one point of ``cell``."""
    v, g = eval_cells(field, [cell], np.asarray(barycentric, dtype=float)[None, :])
    return v[0], g[0]


def eval_points(field: Field, x):
    """Evaluate at physical points (located with the lowest-index rule)."""
    cells, bary = locate_points(field.space.mesh, x)
    return eval_cells(field, cells, bary)


def _call(f, x, ncomp):
    out = np.asarray(f(x), dtype=float)
    if ncomp == 1:
        out = np.broadcast_to(out.reshape(-1) if out.ndim else out, (len(x),))
    else:
        out = np.broadcast_to(out, (len(x), ncomp))
    return np.array(out)


def interpolate(space: Space, f) -> Field:
    """Nodal interpolant of ``f``.

    ``f`` maps an (n, d) array of points to (n,) values, or (n, ncomp) for
    vector spaces.  P0 uses cell centroids; the velocity bubble coefficient
    is set so the interpolant matches ``f`` at the centroid.
    """
    vals = _call(f, space.nodes, space.ncomp)
    coef = vals.reshape(space.nscalar, space.ncomp).T.copy()
    if space.kind == "VectorP2Bubble":
        mesh = space.mesh
        nb = space.nlocal
        centre = np.full((1, mesh.dim + 1), 1.0 / (mesh.dim + 1))
        phi, _ = space.tabulate(centre)
        bdofs = space.dofmap[:, -1]
        coef[:, bdofs] = 0.0
        p2 = np.einsum("kcb,b->ck", coef[:, space.dofmap[:, : nb - 1]], phi[0, : nb - 1])
        coef[:, bdofs] = (vals.reshape(space.nscalar, space.ncomp)[bdofs] - p2).T
    return Field(space, coef.ravel())


def integrate(field: Field, degree: int = 5) -> np.ndarray:
    """Integral of each component over the domain."""
    q = quadrature_rule(field.space.mesh.dim, degree)
    v, _ = eval_qp(field, q.points)
    w = field.space.mesh.volumes[:, None] * q.weights[None, :] * math.factorial(field.space.mesh.dim)
    return np.einsum("cq...,cq->...", v, w)


def zero_mean_project(p: Field) -> Field:
    """Subtract the volume-weighted mean of a discontinuous pressure field."""
    sp = p.space
    if sp.kind not in PRESSURE_KINDS:
        raise ConfigurationError("zero_mean_project expects a pressure-space field")
    vol = sp.mesh.volumes
    local = p.coefficients[sp.dofmap]  # constant or vertex values per cell
    mean = float(np.sum(vol * local.mean(axis=1)) / vol.sum())
    return Field(sp, p.coefficients - mean)


# -- serialization -----------------------------------------------------------
def write_field(path, field: Field) -> None:
    """ASCII: header ``space_kind ndofs`` then one coefficient per line."""
    with open(path, "w") as fh:
        fh.write(f"{field.space.kind} {field.space.ndofs}\n")
        for c in field.coefficients:
            fh.write(repr(float(c)) + "\n")


def read_field(path, space: Space) -> Field:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("field header must be 'space_kind ndofs'")
        kind, n = header[0], int(header[1])
        if kind != space.kind or n != space.ndofs:
            raise ValueError(
                f"field file is {kind}/{n}, space is {space.kind}/{space.ndofs}"
            )
        coef = np.array([float(line) for line in fh if line.strip()])
    return Field(space, coef)
