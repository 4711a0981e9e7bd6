import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from saddlefold.errors import ConeViolation, InvariantViolation, ShapeError
from saddlefold.mesh import build_grid
from saddlefold.model import (CustomTable, ProblemSpec, ScalarPower, check_coercivity_g2, check_growth_g1,
                              check_theorem_hypotheses, eval_g, eval_g_jacobian, power_coupled, scalar_abc)


@pytest.fixture
def g3():
    return build_grid(1, (1.0,), (3,))


def test_power_coupled_values(g3):
    spec = power_coupled(g3, m=2, b_i=0.0, b=1.0, gamma=3.0)
    s = np.ones((2, 3))
    np.testing.assert_allclose(eval_g(spec, s)[:, 0], [2.0, 2.0])
    np.testing.assert_allclose(eval_g_jacobian(spec, s)[:, :, 0], np.full((2, 2), 3.0))


def test_scalar_power_values(g3):
    spec = scalar_abc(g3)
    s = np.full((1, 3), 0.5)
    assert eval_g(spec, s)[0, 0] == pytest.approx(0.125)
    assert eval_g_jacobian(spec, s)[0, 0, 0] == pytest.approx(0.75)
    np.testing.assert_array_equal(eval_g(spec, np.zeros((1, 3))), 0.0)


def test_negative_state_rejected(g3):
    with pytest.raises(ConeViolation):
        eval_g(scalar_abc(g3), -np.ones((1, 3)))


@pytest.mark.parametrize("builder", [scalar_abc, lambda g: power_coupled(g, m=3, b_i=0.5, b=2.0)])
def test_jacobian_matches_differences(builder):
    g = build_grid(1, (1.0,), (9,))
    spec = builder(g)
    rng = np.random.default_rng(1)
    s = rng.uniform(0.5, 1.5, (spec.m, g.size))
    d = rng.uniform(-1, 1, s.shape)
    eps = 1e-6
    fd = (spec.family.g(s + eps * d) - spec.family.g(s - eps * d)) / (2 * eps)
    jd = np.einsum("ijn,jn->in", spec.family.jac(s), d)
    assert np.linalg.norm(fd - jd) <= 1e-5 * np.linalg.norm(jd)
    # second derivative against differences of the Jacobian
    v = rng.uniform(-1, 1, s.shape)
    fd2 = (np.einsum("ijn,jn->in", spec.family.jac(s + eps * d), v)
           - np.einsum("ijn,jn->in", spec.family.jac(s - eps * d), v)) / (2 * eps)
    hv = np.einsum("ijn,jn->in", spec.family.hess_vec(s, v), d)
    assert np.linalg.norm(fd2 - hv) <= 1e-5 * (1 + np.linalg.norm(hv))


def test_growth_checks(g3):
    scalar = scalar_abc(g3, growth_constants=(0.0, 1.0))
    rep = check_growth_g1(scalar, [2.0])
    assert rep.passed and rep.worst == pytest.approx(1.0)

    coupled = power_coupled(g3, m=2, b_i=1.0, b=1.0, growth_constants=(1.0, 2.0))
    rep = check_growth_g1(coupled, [(1.0, 1.0)])
    assert rep.passed
    assert rep.worst == pytest.approx(3.0 / (np.sqrt(2) + 2 * np.sqrt(2) ** 3))

    tight = power_coupled(g3, m=2, b_i=1.0, b=1.0, growth_constants=(0.01, 0.01))
    rep = check_growth_g1(tight, [(1.0, 1.0)])
    assert not rep.passed and rep.worst > 1


def test_coercivity_check(g3):
    spec = power_coupled(g3, m=2, b_i=1.0, b=1.0, coercivity_constants=(0.2, 0.2))
    rep = check_coercivity_g2(spec, [(1.0, 1.0)])
    assert rep.passed
    assert rep.worst == pytest.approx(0.4)
    zero = check_coercivity_g2(spec, [(0.0, 0.0)])
    assert zero.passed and zero.worst == 0.0


@given(st.floats(1e-3, 10.0))
def test_scalar_coercivity_identity(t):
    g = build_grid(1, (1.0,), (3,))
    spec = scalar_abc(g, b=1.0, gamma=3.0, coercivity_constants=(0.0, 2.0))
    s = np.full((1, 3), t)
    left = spec.family.jac(s)[0, 0] * s[0] ** 2 - spec.family.g(s)[0] * s[0]
    np.testing.assert_allclose(left, 2 * t**4, rtol=1e-12)
    assert check_coercivity_g2(spec, [t]).passed


def test_theorem_hypotheses(g3):
    assert check_theorem_hypotheses(scalar_abc(g3, space_dim=3)).passed
    assert not check_theorem_hypotheses(scalar_abc(g3, q=0.7, space_dim=5)).passed
    assert check_theorem_hypotheses(scalar_abc(g3, q=0.99, gamma=50.0, space_dim=1)).passed


@pytest.mark.parametrize("q", [0.0, 1.0, 1.2, -0.5])
def test_q_outside_unit_interval(g3, q):
    with pytest.raises(InvariantViolation, match=r"\(0,1\)"):
        scalar_abc(g3, q=q)


def test_gamma0_above_gamma(g3):
    with pytest.raises(InvariantViolation):
        scalar_abc(g3, gamma=3.0, gamma0=3.5)


def test_family_size_mismatch(g3):
    fam = ScalarPower(np.ones(3), 3.0)
    with pytest.raises(ShapeError):
        ProblemSpec(2, 1, np.array([0.5, 0.5]), np.ones((2, 3)), fam, 3.0, 3.0)


def test_nonpositive_coefficient(g3):
    with pytest.raises(InvariantViolation):
        scalar_abc(g3, a=0.0)


def test_custom_table_reproduces_cubic(g3):
    t = np.linspace(0, 2, 41)
    fam = CustomTable(t, t**3, 3 * t**2, np.ones(3))
    u = np.array([[0.3, 0.9, 1.7]])
    np.testing.assert_allclose(fam.g(u), u**3, rtol=1e-12)
    np.testing.assert_allclose(fam.jac(u)[0], 3 * u**2, rtol=1e-12)
    np.testing.assert_allclose(fam.hess_vec(u, np.ones_like(u))[0], 6 * u, rtol=1e-10)


def test_custom_table_inconsistent_derivative(g3):
    t = np.linspace(0, 2, 41)
    with pytest.raises(InvariantViolation):
        CustomTable(t, t**3, 6 * t**2, np.ones(3))
