"""Conforming simplicial meshes of boxes in 2D and 3D.

Meshes are immutable value objects.  Level-0 meshes are structured Kuhn
triangulations of a box; finer levels come from uniform red refinement.
Two meshes refined from the same level-0 mesh form a :class:`MeshPair`,
one for the momentum system and one for the concentration equation.

Example
-------
>>> from vexflow.mesh import build_structured, refine_uniform
>>> m = build_structured(2, [1, 1], [[0.0, 1.0], [0.0, 1.0]])
>>> refine_uniform(m).ncells
8
"""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidDomainError, PointNotFoundError

__all__ = [
    "Mesh",
    "MeshPair",
    "build_structured",
    "refine_uniform",
    "refine",
    "make_mesh_pair",
    "locate_point",
    "locate_points",
    "read_mesh",
    "write_mesh",
]

# barycentric coordinates down to -LOCATE_TOL count as inside
LOCATE_TOL = 1e-10


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _digest(vertices, cells):
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(vertices, dtype=float).tobytes())
    h.update(np.ascontiguousarray(cells, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh with marked boundary facets.

    Attributes
    ----------
    vertices : (nv, dim) float array
    cells : (nc, dim+1) int array, positively oriented
    boundary_facets : (nb, dim) int array
    boundary_markers : (nb,) int array
    level : int
        Number of uniform refinements applied to the level-0 mesh.
    ancestor : str
        Identifier of the level-0 mesh this one descends from.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_facets: np.ndarray
    boundary_markers: np.ndarray
    level: int = 0
    ancestor: str = ""

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float))
        object.__setattr__(self, "cells", _frozen(self.cells, np.int64))
        object.__setattr__(
            self, "boundary_facets", _frozen(self.boundary_facets, np.int64)
        )
        object.__setattr__(
            self, "boundary_markers", _frozen(self.boundary_markers, np.int64)
        )
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise InvalidDomainError("vertices must be an (n, 2) or (n, 3) array")
        if self.cells.shape[1] != self.dim + 1:
            raise InvalidDomainError("cells must have dim+1 vertices")
        if not self.ancestor:
            object.__setattr__(self, "ancestor", _digest(self.vertices, self.cells))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def nvertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def ncells(self) -> int:
        return self.cells.shape[0]

    # -- geometry ---------------------------------------------------------
    @cached_property
    def jacobians(self) -> np.ndarray:
        """(nc, d, d) affine map Jacobians, columns ``x_i - x_0``."""
        X = self.vertices[self.cells]
        return np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        return np.linalg.det(self.jacobians) / math.factorial(self.dim)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(self.signed_volumes)

    @cached_property
    def grad_lambda(self) -> np.ndarray:
        """(nc, d+1, d) gradients of the barycentric coordinates."""
        inv = np.linalg.inv(self.jacobians)
        return np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def bounding_box(self) -> np.ndarray:
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)], axis=1)

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box.T
        return float(np.linalg.norm(hi - lo))

    @cached_property
    def cell_diameters(self) -> np.ndarray:
        X = self.vertices[self.cells]
        d = np.zeros(self.ncells)
        for i, j in itertools.combinations(range(self.dim + 1), 2):
            d = np.maximum(d, np.linalg.norm(X[:, i] - X[:, j], axis=1))
        return d

    @property
    def h(self) -> float:
        return float(self.cell_diameters.max())

    @cached_property
    def inradii(self) -> np.ndarray:
        # r = d * |E| / |dE|
        X = self.vertices[self.cells]
        d = self.dim
        surface = np.zeros(self.ncells)
        for k in range(d + 1):
            F = np.delete(X, k, axis=1)
            E = F[:, 1:, :] - F[:, :1, :]
            if d == 2:
                surface += np.linalg.norm(E[:, 0], axis=1)
            else:
                surface += 0.5 * np.linalg.norm(np.cross(E[:, 0], E[:, 1]), axis=1)
        return d * self.volumes / surface

    @cached_property
    def shape_ratios(self) -> np.ndarray:
        """diam(E) / inradius(E) for every cell."""
        return self.cell_diameters / self.inradii

    # -- topology ---------------------------------------------------------
    @cached_property
    def _edge_data(self):
        pairs = list(itertools.combinations(range(self.dim + 1), 2))
        e = np.sort(self.cells[:, pairs], axis=2).reshape(-1, 2)
        edges, inverse = np.unique(e, axis=0, return_inverse=True)
        return edges, inverse.reshape(self.ncells, len(pairs))

    @property
    def edges(self) -> np.ndarray:
        """(ne, 2) sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """(nc, n_local_edges) edge indices in ``combinations`` order."""
        return self._edge_data[1]

    @cached_property
    def _facet_data(self):
        d = self.dim
        local = [tuple(j for j in range(d + 1) if j != k) for k in range(d + 1)]
        f = np.sort(self.cells[:, local], axis=2).reshape(-1, d)
        facets, inverse, counts = np.unique(
            f, axis=0, return_inverse=True, return_counts=True
        )
        return facets, inverse.reshape(self.ncells, d + 1), counts

    @property
    def facets(self) -> np.ndarray:
        return self._facet_data[0]

    @property
    def cell_facets(self) -> np.ndarray:
        """(nc, d+1) facet indices; local facet k is opposite vertex k."""
        return self._facet_data[1]

    @property
    def facet_incidence(self) -> np.ndarray:
        """Number of cells sharing each facet."""
        return self._facet_data[2]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_facets)

    def edge_index(self, a, b) -> np.ndarray:
        """Edge indices for vertex pairs ``(a, b)`` (arrays, any order)."""
        a, b = np.minimum(a, b), np.maximum(a, b)
        n = self.nvertices
        keys = self.edges[:, 0] * n + self.edges[:, 1]
        q = np.asarray(a) * n + np.asarray(b)
        idx = np.searchsorted(keys, q)
        if np.any(idx >= len(keys)) or np.any(keys[np.minimum(idx, len(keys) - 1)] != q):
            raise KeyError("vertex pair is not an edge of the mesh")
        return idx

    # -- point location ---------------------------------------------------
    @cached_property
    def _locator(self):
        X = self.vertices[self.cells]
        reach = np.linalg.norm(X - self.centroids[:, None, :], axis=2).max()
        return cKDTree(self.centroids), float(reach)

    def barycentric(self, cells, x) -> np.ndarray:
        """Barycentric coordinates of points ``x`` (n, d) in ``cells`` (n,)."""
        cells = np.asarray(cells)
        x = np.asarray(x, dtype=float)
        x0 = self.vertices[self.cells[cells, 0]]
        xi = np.einsum("nij,nj->ni", np.linalg.inv(self.jacobians[cells]), x - x0)
        return np.concatenate([1.0 - xi.sum(axis=1, keepdims=True), xi], axis=1)


def _orient(vertices, cells):
    X = vertices[cells]
    det = np.linalg.det(np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1)))
    cells = cells.copy()
    neg = det < 0
    cells[neg, -2], cells[neg, -1] = cells[neg, -1], cells[neg, -2].copy()
    return cells


def _boundary_from_cells(vertices, cells, box):
    d = vertices.shape[1]
    local = [tuple(j for j in range(d + 1) if j != k) for k in range(d + 1)]
    f = cells[:, local].reshape(-1, d)
    key = np.sort(f, axis=1)
    _, first, inverse, counts = np.unique(
        key, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    bnd = np.sort(first[counts == 1])
    facets = f[bnd]
    markers = np.zeros(len(facets), dtype=np.int64)
    lo, hi = np.asarray(box, dtype=float).T
    tol = 1e-12 * np.linalg.norm(hi - lo)
    P = vertices[facets]
    for axis in range(d):
        on_lo = np.all(np.abs(P[:, :, axis] - lo[axis]) <= tol, axis=1)
        on_hi = np.all(np.abs(P[:, :, axis] - hi[axis]) <= tol, axis=1)
        markers[(markers == 0) & on_lo] = 2 * axis + 1
        markers[(markers == 0) & on_hi] = 2 * axis + 2
    return facets, markers


def build_structured(dim, divisions, box) -> Mesh:
    """Kuhn triangulation of an axis-aligned box.

    Each of the ``prod(divisions)`` sub-boxes is split into ``dim!``
    simplices sharing its main diagonal.  Boundary facets carry marker
    ``2*axis+1`` on the lower face of ``axis`` and ``2*axis+2`` on the upper.

    Parameters
    ----------
    dim : {2, 3}
    divisions : sequence of int
        Sub-boxes per axis.
    box : sequence of (lo, hi)

    Returns
    -------
    Mesh
    """
    if dim not in (2, 3):
        raise InvalidDomainError(f"dim must be 2 or 3, got {dim}")
    divisions = [int(n) for n in divisions]
    box = np.asarray(box, dtype=float)
    if len(divisions) != dim or box.shape != (dim, 2):
        raise InvalidDomainError("divisions and box must have one entry per axis")
    if any(n < 1 for n in divisions):
        raise InvalidDomainError("divisions must be >= 1")
    if np.any(box[:, 0] >= box[:, 1]):
        raise InvalidDomainError("box needs lo < hi on every axis")

    axes = [np.linspace(lo, hi, n + 1) for (lo, hi), n in zip(box, divisions)]
    grid = np.meshgrid(*axes, indexing="ij")
    # x varies fastest in the vertex numbering
    vertices = np.stack([g.ravel(order="F") for g in grid], axis=1)
    shape = [n + 1 for n in divisions]
    strides = np.cumprod([1] + shape[:-1])

    sub = np.meshgrid(*[np.arange(n) for n in divisions], indexing="ij")
    origins = np.stack([g.ravel(order="F") for g in sub], axis=1)
    base = origins @ strides
    cells = []
    for perm in itertools.permutations(range(dim)):
        path = [np.zeros_like(base)]
        offset = 0
        for ax in perm:
            offset += strides[ax]
            path.append(np.full_like(base, offset))
        cells.append(np.stack([base + p for p in path], axis=1))
    # interleave so that the simplices of one sub-box are contiguous
    cells = np.stack(cells, axis=1).reshape(-1, dim + 1)
    cells = _orient(vertices, cells)
    facets, markers = _boundary_from_cells(vertices, cells, box)
    return Mesh(vertices, cells, facets, markers, level=0)


_TET_EDGES = list(itertools.combinations(range(4), 2))


def _red_children_3d(vertices, cells, mid):
    """Eight children per tetrahedron; ``mid`` maps local edge -> vertex id."""
    V = np.concatenate([cells, mid], axis=1)  # local ids 0-3 vertices, 4-9 edges
    m = {e: 4 + k for k, e in enumerate(_TET_EDGES)}

    def M(i, j):
        return m[(min(i, j), max(i, j))]

    corners = [
        (0, M(0, 1), M(0, 2), M(0, 3)),
        (M(0, 1), 1, M(1, 2), M(1, 3)),
        (M(0, 2), M(1, 2), 2, M(2, 3)),
        (M(0, 3), M(1, 3), M(2, 3), 3),
    ]
    diagonals = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]
    P = vertices
    lengths = np.stack(
        [
            np.linalg.norm(P[V[:, M(*a)]] - P[V[:, M(*b)]], axis=1)
            for a, b in diagonals
        ],
        axis=1,
    )
    # the parent edges whose midpoints each diagonal joins
    spans = np.stack(
        [
            np.maximum(
                np.linalg.norm(P[V[:, a[0]]] - P[V[:, a[1]]], axis=1),
                np.linalg.norm(P[V[:, b[0]]] - P[V[:, b[1]]], axis=1),
            )
            for a, b in diagonals
        ],
        axis=1,
    )
    # shortest diagonal; ties go to the shorter parent edges, then the
    # lowest diagonal index (keeps Kuhn simplices self-similar)
    tied = lengths <= lengths.min(axis=1, keepdims=True) * (1 + 1e-12)
    spans = np.where(tied, spans, np.inf)
    choice = np.argmax(spans <= spans.min(axis=1, keepdims=True) * (1 + 1e-12), axis=1)

    out = np.empty((len(cells), 8, 4), dtype=np.int64)
    for k, loc in enumerate(corners):
        out[:, k] = V[:, loc]
    for c, ((i, j), (k, l)) in enumerate(diagonals):
        sel = choice == c
        if not np.any(sel):
            continue
        a, b = M(i, j), M(k, l)
        ring = [M(i, k), M(i, l), M(j, l), M(j, k)]
        for s in range(4):
            loc = (a, b, ring[s], ring[(s + 1) % 4])
            out[sel, 4 + s] = V[sel][:, loc]
    return out.reshape(-1, 4)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: 4 children per triangle, 8 per tetrahedron.

    New vertices are appended after the old ones in edge order, so the
    vertex set of the parent is a prefix of the child's.  In 3D the inner
    octahedron is cut along its shortest diagonal.
    """
    nv = mesh.nvertices
    E = mesh.edges
    vertices = np.concatenate([mesh.vertices, 0.5 * (mesh.vertices[E[:, 0]] + mesh.vertices[E[:, 1]])])
    mid = nv + mesh.cell_edges
    c = mesh.cells
    if mesh.dim == 2:
        m01, m02, m12 = mid[:, 0], mid[:, 1], mid[:, 2]
        children = np.stack(
            [
                np.stack([c[:, 0], m01, m02], axis=1),
                np.stack([m01, c[:, 1], m12], axis=1),
                np.stack([m02, m12, c[:, 2]], axis=1),
                np.stack([m01, m12, m02], axis=1),
            ],
            axis=1,
        ).reshape(-1, 3)
        f = mesh.boundary_facets
        fm = nv + mesh.edge_index(f[:, 0], f[:, 1])
        facets = np.stack(
            [np.stack([f[:, 0], fm], axis=1), np.stack([fm, f[:, 1]], axis=1)], axis=1
        ).reshape(-1, 2)
        markers = np.repeat(mesh.boundary_markers, 2)
    else:
        children = _red_children_3d(vertices, c, mid)
        f = mesh.boundary_facets
        a, b, cc = f[:, 0], f[:, 1], f[:, 2]
        mab = nv + mesh.edge_index(a, b)
        mac = nv + mesh.edge_index(a, cc)
        mbc = nv + mesh.edge_index(b, cc)
        facets = np.stack(
            [
                np.stack([a, mab, mac], axis=1),
                np.stack([mab, b, mbc], axis=1),
                np.stack([mac, mbc, cc], axis=1),
                np.stack([mab, mbc, mac], axis=1),
            ],
            axis=1,
        ).reshape(-1, 3)
        markers = np.repeat(mesh.boundary_markers, 4)
    children = _orient(vertices, children)
    return Mesh(
        vertices, children, facets, markers, level=mesh.level + 1, ancestor=mesh.ancestor
    )


def refine(mesh: Mesh, times: int) -> Mesh:
    for _ in range(times):
        mesh = refine_uniform(mesh)
    return mesh


@dataclass(frozen=True, eq=False)
class MeshPair:
    """Fluid mesh (momentum system) and concentration mesh.

    Both are uniform refinements of the same level-0 mesh; their levels
    are independent.
    """

    fluid: Mesh
    conc: Mesh
    ancestor: str = field(default="")

    def __post_init__(self):
        if self.fluid.ancestor != self.conc.ancestor:
            raise InvalidDomainError("meshes of a pair must share a level-0 ancestor")
        if self.fluid.dim != self.conc.dim:
            raise InvalidDomainError("meshes of a pair must have equal dimension")
        object.__setattr__(self, "ancestor", self.fluid.ancestor)


def make_mesh_pair(base: Mesh, fluid_level: int, conc_level: int) -> MeshPair:
    """Refine ``base`` to the requested levels; equal levels share one object."""
    lo = min(fluid_level, conc_level)
    common = refine(base, lo)
    fluid = refine(common, fluid_level - lo)
    conc = refine(common, conc_level - lo)
    return MeshPair(fluid, conc)


def locate_points(mesh: Mesh, x):
    """Vectorized point location.

    Returns
    -------
    cells : (n,) int array
        Lowest-index cell containing each point.
    bary : (n, d+1) float array
        Barycentric coordinates, clipped at zero and renormalized.

    Raises
    ------
    PointNotFoundError
        If some point lies outside the mesh.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = len(x)
    tree, reach = mesh._locator
    reach += 1e-12 * mesh.diameter
    lists = tree.query_ball_point(x, r=reach)
    counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=n)
    pts = np.repeat(np.arange(n), counts)
    cand = (
        np.fromiter(itertools.chain.from_iterable(lists), dtype=np.int64, count=counts.sum())
        if counts.sum()
        else np.zeros(0, dtype=np.int64)
    )
    lam = mesh.barycentric(cand, x[pts])
    inside = lam.min(axis=1) >= -LOCATE_TOL
    pts, cand, lam = pts[inside], cand[inside], lam[inside]
    order = np.lexsort((cand, pts))
    pts, cand, lam = pts[order], cand[order], lam[order]
    first = np.ones(len(pts), dtype=bool)
    first[1:] = pts[1:] != pts[:-1]
    found = np.zeros(n, dtype=bool)
    found[pts[first]] = True
    if not found.all():
        bad = x[~found][0]
        raise PointNotFoundError(f"point {bad.tolist()} is outside the mesh")
    cells = cand[first]
    bary = np.clip(lam[first], 0.0, None)
    bary /= bary.sum(axis=1, keepdims=True)
    return cells, bary


def locate_point(mesh: Mesh, x):
    """Cell index and barycentric coordinates of a single point.

    On shared facets the lowest-index containing cell wins.
    """
    cells, bary = locate_points(mesh, np.asarray(x, dtype=float)[None, :])
    return int(cells[0]), bary[0]


# -- ASCII mesh format ------------------------------------------------------
def write_mesh(path, mesh: Mesh) -> None:
    """Write ``dim ncells nverts nbfacets`` header, vertices, cells, facets."""
    with open(path, "w") as fh:
        fh.write("# vexflow mesh\n")
        fh.write(f"{mesh.dim} {mesh.ncells} {mesh.nvertices} {len(mesh.boundary_facets)}\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(c)) for c in v) + "\n")
        for c in mesh.cells:
            fh.write(" ".join(str(int(i)) for i in c) + "\n")
        for f, m in zip(mesh.boundary_facets, mesh.boundary_markers):
            fh.write(" ".join(str(int(i)) for i in f) + f" {int(m)}\n")


def read_mesh(path) -> Mesh:
    """Read the ASCII mesh format; ``#`` starts a comment."""
    tokens = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.append(line.split())
    if not tokens or len(tokens[0]) != 4:
        raise InvalidDomainError("mesh header must be 'dim ncells nverts nbfacets'")
    dim, nc, nv, nb = (int(t) for t in tokens[0])
    body = tokens[1:]
    if len(body) != nv + nc + nb:
        raise InvalidDomainError(
            f"expected {nv + nc + nb} data lines after the header, found {len(body)}"
        )
    try:
        vertices = np.array(body[:nv], dtype=float).reshape(nv, dim)
        cells = np.array(body[nv:nv + nc], dtype=np.int64).reshape(nc, dim + 1)
        bf = np.array(body[nv + nc:], dtype=np.int64).reshape(nb, dim + 1)
    except ValueError as exc:
        raise InvalidDomainError(f"malformed mesh data: {exc}") from None
    if cells.size and (cells.min() < 0 or cells.max() >= nv):
        raise InvalidDomainError("cell vertex index out of range")
    return Mesh(vertices, _orient(vertices, cells), bf[:, :dim], bf[:, dim], level=0)
