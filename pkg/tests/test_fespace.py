import numpy as np
import pytest

from vexflow.errors import ConfigurationError
from vexflow.fespace import (
    Field,
    build_space,
    build_spaces,
    eval_cells,
    eval_points,
    evaluate_field,
    integrate,
    interpolate,
    read_field,
    write_field,
    zero_mean_project,
)
from vexflow.mesh import build_structured, make_mesh_pair, refine, refine_uniform
from vexflow.quadrature import quadrature_rule

from conftest import UNIT_CUBE, UNIT_SQUARE

ALL_KINDS = ["VectorP2", "VectorP2Bubble", "VectorP1", "ScalarP1", "P0", "P1Discontinuous"]


def test_two_triangle_counts(square1):
    V, Q, Z = build_spaces(make_mesh_pair(square1, 0, 0))
    assert (V.ndofs, Q.ndofs, Z.ndofs) == (18, 2, 4)


def test_unsupported_pair(square1):
    with pytest.raises(ConfigurationError):
        build_spaces(make_mesh_pair(square1, 0, 0), "VectorP1", "P0")


def test_p0_quadruples(square2):
    Q0 = build_space(square2, "P0")
    Q1 = build_space(refine_uniform(square2), "P0")
    assert Q1.ndofs == 4 * Q0.ndofs


@pytest.mark.parametrize("kind", ["VectorP2", "VectorP2Bubble", "ScalarP1", "P1Discontinuous"])
def test_boundary_dofs_nonempty_and_on_boundary(square2, kind):
    S = build_space(square2, kind)
    assert S.boundary_dofs.size > 0
    x = S.nodes[S.boundary_scalar]
    on = np.any(np.isclose(x, 0.0) | np.isclose(x, 1.0), axis=1)
    assert on.all()
    interior = np.setdiff1d(np.arange(S.nscalar), S.boundary_scalar)
    xi = S.nodes[interior]
    assert not np.any(np.isclose(xi, 0.0) | np.isclose(xi, 1.0), axis=1).any()


def test_p0_has_no_boundary_nodes(square2):
    # cell centroids never lie on the boundary
    assert build_space(square2, "P0").boundary_dofs.size == 0


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("kind", ALL_KINDS)
def test_linear_reproduction(dim, kind, rng):
    box = UNIT_SQUARE if dim == 2 else UNIT_CUBE
    mesh = refine_uniform(build_structured(dim, [1] * dim, box))
    S = build_space(mesh, kind)
    A = rng.standard_normal((S.ncomp, dim))
    b = rng.standard_normal(S.ncomp)

    def f(x):
        v = x @ A.T + b
        return v[:, 0] if S.ncomp == 1 else v

    if kind == "P0":
        # constants only
        F = interpolate(S, lambda x: np.full(len(x), 2.5))
        np.testing.assert_array_equal(F.coefficients, 2.5)
        return
    F = interpolate(S, f)
    x = rng.random((200, dim))
    v, g = eval_points(F, x)
    expect = f(x)
    np.testing.assert_allclose(v, expect, atol=1e-13)
    grad = np.broadcast_to(A if S.ncomp > 1 else A[0], g.shape)
    np.testing.assert_allclose(g, grad, atol=1e-12)


def test_p1_midpoint_error_is_h2_over_4(square2):
    mesh = refine(square2, 1)
    Z = build_space(mesh, "ScalarP1")
    F = interpolate(Z, lambda x: x[:, 0] ** 2)
    h = 0.25
    # midpoints of horizontal edges
    e = mesh.edges
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    horiz = np.isclose(a[:, 1], b[:, 1])
    mid = 0.5 * (a[horiz] + b[horiz])
    v, _ = eval_points(F, mid)
    np.testing.assert_allclose(v - mid[:, 0] ** 2, h * h / 4, atol=1e-15)


def test_constant_field_zero_gradient(square2):
    Z = build_space(square2, "ScalarP1")
    F = interpolate(Z, lambda x: np.full(len(x), 3.0))
    _, g = evaluate_field(F, 3, [0.2, 0.3, 0.5])
    np.testing.assert_allclose(g, 0.0, atol=1e-14)


@pytest.mark.parametrize("kind", ["VectorP2", "VectorP2Bubble"])
def test_gradient_finite_differences(square2, kind, rng):
    V = build_space(square2, kind)
    F = Field(V, rng.standard_normal(V.ndofs))
    mesh = V.mesh
    eps = 1e-6
    for cell in (0, 5):
        bary = np.array([0.2, 0.35, 0.45])
        x = bary @ mesh.vertices[mesh.cells[cell]]
        _, g = evaluate_field(F, cell, bary)
        for j in range(2):
            dx = np.zeros(2)
            dx[j] = eps
            lp = mesh.barycentric([cell], (x + dx)[None])[0]
            lm = mesh.barycentric([cell], (x - dx)[None])[0]
            fd = (evaluate_field(F, cell, lp)[0] - evaluate_field(F, cell, lm)[0]) / (2 * eps)
            np.testing.assert_allclose(g[:, j], fd, rtol=1e-5, atol=1e-7)


def test_eval_out_of_range_cell(square1):
    Z = build_space(square1, "ScalarP1")
    with pytest.raises(IndexError):
        eval_cells(Field.zeros(Z), [7], np.array([[1 / 3, 1 / 3, 1 / 3]]))


def test_interpolate_is_projection(square2, rng):
    for kind in ["VectorP2", "VectorP2Bubble", "ScalarP1", "P0", "P1Discontinuous"]:
        S = build_space(square2, kind)
        if not S.continuous:
            continue
        F = Field(S, rng.standard_normal(S.ndofs))

        def f(x, F=F):
            v, _ = eval_points(F, x)
            return v

        G = interpolate(S, f)
        np.testing.assert_allclose(G.coefficients, F.coefficients, atol=1e-12)


def test_homogeneous_velocity_vanishes_on_boundary(square2, rng):
    V = build_space(refine_uniform(square2), "VectorP2")
    c = rng.standard_normal(V.ndofs)
    c[V.boundary_dofs] = 0.0
    F = Field(V, c)
    mesh = V.mesh
    # three-point rule on each boundary edge
    t = np.array([0.1127016653792583, 0.5, 0.8872983346207417])
    P = mesh.vertices[mesh.boundary_facets]
    x = (P[:, None, 0] * (1 - t)[None, :, None] + P[:, None, 1] * t[None, :, None]).reshape(-1, 2)
    v, _ = eval_points(F, x)
    assert np.abs(v).max() <= 1e-13


def test_zero_mean_projection(square2, rng):
    Q = build_space(square2, "P0")
    np.testing.assert_allclose(zero_mean_project(interpolate(Q, lambda x: np.full(len(x), 4.0))).coefficients, 0.0)
    p = Field(Q, rng.standard_normal(Q.ndofs))
    # explicit volume-weighted sum
    mean = sum(v * a for v, a in zip(p.coefficients, square2.volumes)) / sum(square2.volumes)
    pz = zero_mean_project(p)
    np.testing.assert_allclose(pz.coefficients, p.coefficients - mean, atol=1e-15)
    np.testing.assert_allclose(zero_mean_project(pz).coefficients, pz.coefficients, atol=1e-14)
    assert abs(integrate(pz)) <= 1e-12 * np.linalg.norm(p.coefficients)
    q = Field(Q, rng.standard_normal(Q.ndofs))
    lin = zero_mean_project(p * 2.0 + q)
    np.testing.assert_allclose(lin.coefficients, (zero_mean_project(p) * 2.0 + zero_mean_project(q)).coefficients, atol=1e-14)


def test_zero_mean_p1_discontinuous(square2, rng):
    Q = build_space(square2, "P1Discontinuous")
    p = zero_mean_project(Field(Q, rng.standard_normal(Q.ndofs)))
    assert abs(integrate(p)) <= 1e-14


def test_field_length_checked(square1):
    Z = build_space(square1, "ScalarP1")
    with pytest.raises(ValueError):
        Field(Z, np.zeros(3))


def test_field_round_trip(tmp_path, square2, rng):
    V = build_space(square2, "VectorP2")
    F = Field(V, rng.standard_normal(V.ndofs))
    write_field(tmp_path / "u.field", F)
    G = read_field(tmp_path / "u.field", V)
    np.testing.assert_array_equal(G.coefficients, F.coefficients)
    with pytest.raises(ValueError):
        read_field(tmp_path / "u.field", build_space(square2, "ScalarP1"))


def test_integrate_quadratic(square2):
    Z = build_space(square2, "ScalarP1")
    V = build_space(square2, "VectorP2")
    F = interpolate(V, lambda x: np.stack([x[:, 0] ** 2, x[:, 0] * x[:, 1]], axis=1))
    np.testing.assert_allclose(integrate(F), [1 / 3, 1 / 4], atol=1e-15)
    assert integrate(interpolate(Z, lambda x: x[:, 1])) == pytest.approx(0.5)


def test_bubble_vanishes_on_cell_boundary(square1):
    V = build_space(square1, "VectorP2Bubble")
    lam = np.array([[0.0, 0.3, 0.7], [0.5, 0.0, 0.5]])
    vals, _ = V.tabulate(lam)
    np.testing.assert_allclose(vals[:, -1], 0.0)
    vals, _ = V.tabulate(np.full((1, 3), 1 / 3))
    assert vals[0, -1] == pytest.approx(1.0)
    _ = quadrature_rule(2, 2)
