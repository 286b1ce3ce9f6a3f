import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from vexflow.constitutive import ExponentField, StressLaw, constant_exponent
from vexflow.fespace import Field, build_space, build_spaces, interpolate
from vexflow.mesh import build_structured, make_mesh_pair, refine
from vexflow.varexp import (
    energy_report,
    log_holder_estimate,
    luxembourg_from_samples,
    luxembourg_norm,
    modular,
)

from conftest import UNIT_SQUARE


def piecewise_oracle():
    """Root of ``int_0^1 |x/lam|^r(x) = 1`` with r = 1.5 on (0, 1/2), 3 on (1/2, 1)."""
    a = 0.5**2.5 / 2.5
    b = (1 - 0.5**4) / 4
    return brentq(lambda lam: a * lam**-1.5 + b * lam**-3 - 1, 0.1, 10.0, xtol=1e-15, rtol=1e-15)


def piecewise_exponent(x):
    return np.where(x[:, 0] < 0.5, 1.5, 3.0)


def test_zero_field(square2):
    assert modular(lambda x: np.zeros(len(x)), 2.0, square2) == 0.0
    res = luxembourg_norm(lambda x: np.zeros(len(x)), 2.0, square2)
    assert res.value == 0.0 and res.iterations == 0


@pytest.mark.parametrize("r", [1.5, 2.0, 3.0, 4.5])
def test_constant_exponent_is_lebesgue(square2, r):
    mesh = refine(square2, 2)
    # |f| = (x+1)(y+2) has integer powers for r in {2, 3}; quad otherwise
    f = lambda x: (x[:, 0] + 1) * (x[:, 1] + 2)
    fx = quad(lambda t: (t + 1) ** r, 0, 1, epsabs=1e-15)[0]
    fy = quad(lambda t: (t + 2) ** r, 0, 1, epsabs=1e-15)[0]
    norm = (fx * fy) ** (1 / r)
    assert modular(f, r, mesh) == pytest.approx(fx * fy, rel=1e-10)
    assert luxembourg_norm(f, r, mesh).value == pytest.approx(norm, rel=1e-10)


def test_unit_constant_any_exponent(square2, rng):
    mesh = refine(square2, 1)
    for _ in range(5):
        a, b = rng.uniform(1.1, 4.0, 2)
        res = luxembourg_norm(lambda x: np.ones(len(x)), lambda x: a + (b - a) * x[:, 1], mesh)
        assert res.value == pytest.approx(1.0, rel=1e-12)


def test_variable_exponent_modular_oracle(square2):
    mesh = refine(square2, 3)
    expect = quad(lambda t: t ** (2 + t), 0, 1, epsabs=1e-15, epsrel=1e-14)[0]
    assert modular(lambda x: x[:, 0], lambda x: 2 + x[:, 0], mesh) == pytest.approx(expect, rel=1e-8)


def test_piecewise_exponent_root_oracle(square2):
    # quadrature of x^1.5 near x = 0 converges like h^2.5; level 4 gives ~4e-9
    mesh = refine(square2, 4)
    res = luxembourg_norm(lambda x: x[:, 0], piecewise_exponent, mesh)
    assert res.value == pytest.approx(piecewise_oracle(), rel=1e-8)


def test_homogeneity(square2, rng):
    mesh = refine(square2, 1)
    f = lambda x: np.sin(3 * x[:, 0]) + x[:, 1] ** 2
    r = lambda x: 1.6 + 0.8 * x[:, 0] * x[:, 1]
    base = luxembourg_norm(f, r, mesh).value
    for a in rng.uniform(-1e3, 1e3, 50):
        va = luxembourg_norm(lambda x: a * f(x), r, mesh).value
        assert va == pytest.approx(abs(a) * base, rel=1e-10)


def test_unit_ball_and_monotone_modular(square2, rng):
    mesh = refine(square2, 1)
    f = lambda x: np.exp(x[:, 0]) - x[:, 1]
    r = lambda x: 1.3 + 2 * x[:, 1]
    res = luxembourg_norm(f, r, mesh)
    assert res.modular <= 1 + 1e-10
    rho = modular(lambda x: f(x) / res.value, r, mesh)
    assert 1 - 1e-8 <= rho <= 1 + 1e-10
    assert modular(lambda x: f(x) / (res.value * (1 - 1e-8)), r, mesh) > 1
    vals = [modular(lambda x, s=s: f(x) / s, r, mesh) for s in (0.5, 1.0, 2.0)]
    assert vals[0] > vals[1] > vals[2]


def test_nonfinite_rejected(square1):
    with pytest.raises(ValueError):
        luxembourg_norm(lambda x: np.full(len(x), np.nan), 2.0, square1)
    with pytest.raises(ValueError):
        modular(lambda x: np.full(len(x), np.inf), 2.0, square1)


def test_bracket_overflow():
    with pytest.raises(OverflowError):
        luxembourg_from_samples(np.array([1e200]), np.array([1.01]), np.array([1.0]))


def test_vector_magnitude(square2):
    mesh = refine(square2, 1)
    # |(3, 4)| = 5 everywhere
    f = lambda x: np.tile([3.0, 4.0], (len(x), 1))
    assert luxembourg_norm(f, 2.5, mesh).value == pytest.approx(5.0, rel=1e-12)


def test_energy_zero_fields(square2):
    V, Q, Z = build_spaces(make_mesh_pair(square2, 1, 2))
    rep = energy_report(Field.zeros(V), Field.zeros(Q), Field.zeros(Z), StressLaw(), k_reg=1e4)
    assert rep.as_row() == [0.0, 0.0, 0.0, 0.0]


def test_energy_newtonian_identity(square2, rng):
    V, Q, Z = build_spaces(make_mesh_pair(square2, 1, 1))
    U = Field(V, rng.standard_normal(V.ndofs))
    C = Field(Z, rng.standard_normal(Z.ndofs))
    law = StressLaw(nu0=1.7, exponent=constant_exponent(2.0))
    rep = energy_report(U, Field.zeros(Q), C, law)
    assert rep.E_stress == pytest.approx(1.7**2 * rep.E_visc, rel=1e-13)
    assert rep.E_reg == 0.0


def test_energy_grad_c(square2):
    V, Q, Z = build_spaces(make_mesh_pair(square2, 0, 2))
    C = interpolate(Z, lambda x: 2 * x[:, 0] - x[:, 1])
    rep = energy_report(Field.zeros(V), Field.zeros(Q), C, StressLaw())
    assert rep.E_grad_c == pytest.approx(5.0, rel=1e-13)


def test_log_holder():
    mesh = refine(build_structured(2, [2, 2], UNIT_SQUARE), 2)
    Z = build_space(mesh, "ScalarP1")
    C = interpolate(Z, lambda x: x[:, 0])
    assert log_holder_estimate(constant_exponent(1.8), C) == 0.0
    assert log_holder_estimate(ExponentField(1.6, 2.4, gamma=0.0), C) == 0.0
    r = ExponentField(1.6, 2.4, gamma=8.0, c_mid=0.5)
    a = log_holder_estimate(r, C, seed=0)
    b = log_holder_estimate(r, C, seed=1)
    assert np.isfinite(a) and a > 0
    assert abs(a - b) <= 0.05 * max(a, b)
