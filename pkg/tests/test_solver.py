import csv

import numpy as np
import pytest
import scipy.sparse as sp

from vexflow.assembly import SaddleSystem, divergence_matrix, fe_data
from vexflow.constitutive import ExponentField, FluxLaw, StressLaw, constant_exponent
from vexflow.errors import ConfigurationError, NonConvergenceError
from vexflow.fespace import Field, build_spaces, eval_qp, interpolate
from vexflow.mesh import make_mesh_pair
from vexflow.quadrature import quadrature_rule
from vexflow.scenarios import boundary_concentration, forcing
from vexflow.solver import (
    TRACE_COLUMNS,
    SolverConfig,
    make_lift,
    solve_concentration,
    solve_coupled,
    solve_momentum,
    solve_saddle_point,
    sweep_k,
)

LAWS = (StressLaw(exponent=ExponentField(1.6, 2.4, gamma=8.0, c_mid=0.5)), FluxLaw(1.0, 0.5))


@pytest.fixture
def spaces(square2):
    return build_spaces(make_mesh_pair(square2, 1, 2))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(t=6.0, k_reg=1e3)
    SolverConfig(t=2.0, k_reg=np.inf)
    for bad in ({"damping": 0.0}, {"outer_tol": -1.0}, {"inner_method": "bfgs"}, {"k_reg": 0.0}):
        with pytest.raises(ConfigurationError):
            SolverConfig(**bad)


def test_saddle_point_identity(rng):
    n, m = 12, 4
    G = rng.standard_normal((n, n))
    A = sp.csr_matrix(G @ G.T + n * np.eye(n))
    B = rng.standard_normal((m, n))
    # like a divergence matrix, constants lie in the kernel of B^T
    B = sp.csr_matrix(B - B.mean(axis=0))
    mvec = rng.uniform(0.5, 1.0, m)
    f = rng.standard_normal(n)
    u, p = solve_saddle_point(SaddleSystem(A, B, f, mvec))
    np.testing.assert_allclose(B @ u, 0.0, atol=1e-12)
    assert abs(mvec @ p) <= 1e-12
    r = A @ u - B.T @ p - f
    np.testing.assert_allclose(r, 0.0, atol=1e-11)


def test_zero_forcing_fixed_point(spaces):
    sol, trace = solve_coupled(spaces, LAWS, None, 0.7, SolverConfig())
    assert len(trace) == 1 and trace.converged
    assert np.all(sol.U.coefficients == 0.0)
    assert np.all(sol.P.coefficients == 0.0)
    assert np.all(sol.C.coefficients == 0.7)


def test_newtonian_picard_two_steps(spaces):
    V, Q, Z = spaces
    law = StressLaw(exponent=constant_exponent(2.0))
    cfg = SolverConfig(k_reg=np.inf, convection_on=False)
    C = make_lift(Z, 0.5)
    _, _, trace = solve_momentum(V, Q, C, law, forcing("vortex", 5.0), cfg)
    # the second solve reproduces the first up to roundoff
    assert len(trace) <= 2


def _divergence_defect(U, Q, degree=5):
    B = divergence_matrix(fe_data(U.space, degree), Q)
    q = quadrature_rule(U.space.mesh.dim, degree)
    v, g = eval_qp(U, q.points)
    JxW = U.space.mesh.volumes[:, None] * 2 * q.weights[None, :]
    h1 = np.sqrt(np.sum(JxW * (np.sum(v * v, axis=-1) + np.sum(g * g, axis=(-2, -1)))))
    return np.max(np.abs(B @ U.coefficients)), h1


@pytest.mark.parametrize("method", ["picard", "newton"])
def test_discrete_divergence_free(spaces, method):
    cfg = SolverConfig(inner_method=method)
    sol, _ = solve_coupled(spaces, LAWS, forcing("vortex", 20.0), boundary_concentration("affine"), cfg)
    defect, h1 = _divergence_defect(sol.U, spaces[1])
    assert defect <= 1e-10 * h1


def test_newton_matches_picard(spaces):
    f, c_d = forcing("vortex", 20.0), boundary_concentration("affine")
    a, ta = solve_coupled(spaces, LAWS, f, c_d, SolverConfig(outer_tol=1e-11, inner_tol=1e-12))
    b, tb = solve_coupled(spaces, LAWS, f, c_d, SolverConfig(outer_tol=1e-11, inner_tol=1e-12, inner_method="newton"))
    scale = np.abs(a.U.coefficients).max()
    assert np.abs(a.U.coefficients - b.U.coefficients).max() <= 1e-8 * scale
    assert np.abs(a.C.coefficients - b.C.coefficients).max() <= 1e-8
    assert sum(len(i) for i in tb.inner) < sum(len(i) for i in ta.inner)


def test_deterministic(spaces):
    f, c_d = forcing("shear", 10.0), boundary_concentration("lid")
    a, _ = solve_coupled(spaces, LAWS, f, c_d, SolverConfig())
    b, _ = solve_coupled(spaces, LAWS, f, c_d, SolverConfig())
    for x, y in ((a.U, b.U), (a.P, b.P), (a.C, b.C)):
        np.testing.assert_array_equal(x.coefficients, y.coefficients)


def test_pressure_mean_zero(spaces):
    sol, _ = solve_coupled(spaces, LAWS, forcing("shear", 10.0), 1.0, SolverConfig())
    assert abs(np.dot(sol.P.space.mesh.volumes, sol.P.coefficients)) <= 1e-14


def test_decoupled_settles_in_two_outer_steps(spaces):
    # exponent and diffusivity independent of C: momentum never sees C
    laws = (StressLaw(exponent=ExponentField(1.6, 2.4, gamma=0.0)), FluxLaw(1.0, 0.0))
    _, trace = solve_coupled(spaces, laws, forcing("vortex", 10.0), boundary_concentration("affine"), SolverConfig())
    assert len(trace) <= 2


def test_infinite_vs_huge_regularization(spaces):
    f, c_d = forcing("vortex", 10.0), boundary_concentration("affine")
    a, _ = solve_coupled(spaces, LAWS, f, c_d, SolverConfig(k_reg=np.inf, outer_tol=1e-11))
    b, _ = solve_coupled(spaces, LAWS, f, c_d, SolverConfig(k_reg=1e12, outer_tol=1e-11))
    scale = np.abs(a.U.coefficients).max()
    assert np.abs(a.U.coefficients - b.U.coefficients).max() <= 1e-6 * scale


def test_concentration_linear_in_data(spaces, rng):
    V, Q, Z = spaces
    law = FluxLaw(1.0, 0.0)
    U = Field(V, np.where(V.free_mask, rng.standard_normal(V.ndofs), 0.0))
    C0 = Field.zeros(Z)
    zero = Field.zeros(Z)
    g1 = lambda x: np.sin(3 * x[:, 0])
    g2 = lambda x: x[:, 1] ** 2
    c1 = solve_concentration(Z, U, C0, zero, law, g1)
    c2 = solve_concentration(Z, U, C0, zero, law, g2)
    c12 = solve_concentration(Z, U, C0, zero, law, lambda x: 2 * g1(x) - g2(x))
    np.testing.assert_allclose(c12.coefficients, 2 * c1.coefficients - c2.coefficients, atol=1e-13)


def test_poisson_rates(square2):
    law = FluxLaw(1.0, 0.0)
    exact = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]) + x[:, 0]
    source = lambda x: 2 * np.pi**2 * np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    errs = []
    for lev in (2, 3, 4):
        V, Q, Z = build_spaces(make_mesh_pair(square2, 0, lev))
        C = solve_concentration(Z, Field.zeros(V), Field.zeros(Z), interpolate(Z, exact), law, source)
        q = quadrature_rule(2, 6)
        v, g = eval_qp(C, q.points)
        xq = np.einsum("qk,ckd->cqd", q.points, Z.mesh.vertices[Z.mesh.cells])
        x = xq.reshape(-1, 2)
        ex_g = np.stack(
            [np.pi * np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]) + 1, np.pi * np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])],
            axis=1,
        ).reshape(g.shape)
        JxW = Z.mesh.volumes[:, None] * 2 * q.weights[None, :]
        errs.append((
            np.sqrt(np.sum(JxW * (v - exact(x).reshape(v.shape)) ** 2)),
            np.sqrt(np.sum(JxW * np.sum((g - ex_g) ** 2, axis=-1))),
        ))
    l2 = np.log2(errs[-2][0] / errs[-1][0])
    h1 = np.log2(errs[-2][1] / errs[-1][1])
    assert 1.9 <= l2 <= 2.1
    assert 0.9 <= h1 <= 1.1


def test_nonconvergence_carries_trace(spaces):
    cfg = SolverConfig(inner_maxit=1)
    with pytest.raises(NonConvergenceError) as info:
        solve_coupled(spaces, LAWS, forcing("vortex", 20.0), 1.0, cfg)
    assert info.value.trace is not None


def test_trace_csv(spaces, tmp_path):
    _, trace = solve_coupled(spaces, LAWS, forcing("vortex", 20.0), boundary_concentration("affine"), SolverConfig())
    trace.to_csv(tmp_path / "t.csv")
    with open(tmp_path / "t.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) == len(trace) + 1
    dU = trace.column("dU_rel")
    assert dU[-1] <= 1e-8 and np.all(trace.column("E_visc") >= 0)


def test_sweep_records_failures(spaces):
    rows = sweep_k(spaces, LAWS, forcing("vortex", 20.0), 1.0, SolverConfig(inner_maxit=1), ks=(1e2, 1e3))
    assert len(rows) == 2
    assert all(r.error for r in rows) and all(np.isnan(r.E_reg) for r in rows)


def test_sweep_energy_decreases(spaces):
    rows = sweep_k(spaces, LAWS, forcing("vortex", 20.0), boundary_concentration("affine"), SolverConfig(), ks=(1e2, 1e3, 1e4))
    E = [r.E_reg for r in rows]
    assert E[0] >= E[1] >= E[2] > 0
    assert np.isnan(rows[0].dist_prev) and rows[2].dist_prev < rows[1].dist_prev
