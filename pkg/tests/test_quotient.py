import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from saddlefold.errors import ConeViolation, DenominatorDegenerate
from saddlefold.mesh import build_grid, l2_norm
from saddlefold.model import power_coupled, scalar_abc
from saddlefold.operator import residual_values
from saddlefold.quotient import (CONSTANT, UNBOUNDED_BELOW, criticality_equivalence_check, inner_inf_probe,
                                 minimizing_sequence_test, quotient_grad_u, quotient_grad_v, rayleigh_extended)


def _fd_pairing(f, x, xi, eps=1e-6):
    return (f(x + eps * xi) - f(x - eps * xi)) / (2 * eps)


def test_hand_computed_value(tiny):
    spec = scalar_abc(tiny)
    q = rayleigh_extended(spec, tiny, np.array([[0.25, 0.5, 0.25]]), np.ones((1, 3)))
    # 0.25*8*... : numerator 2 - 0.25*(0.5 + sqrt(0.5) + 0.5), denominator 0.25*(2/64 + 1/8)
    assert q.numerator == pytest.approx(2 - 0.25 * (1 + np.sqrt(0.5)), rel=1e-14)
    assert q.numerator == pytest.approx(1.573223, abs=5e-7)
    assert q.denominator == pytest.approx(0.0390625, rel=1e-14)
    assert q.value == pytest.approx(40.2745, abs=5e-5)


@given(st.floats(1e-3, 1e3))
def test_zero_homogeneous(c):
    g = build_grid(1, (1.0,), (15,))
    spec = power_coupled(g, m=2, b_i=0.5)
    rng = np.random.default_rng(4)
    s = rng.uniform(0.1, 1.0, (2, g.size))
    v = rng.uniform(0.1, 1.0, (2, g.size))
    r1 = rayleigh_extended(spec, g, s, v).value
    r2 = rayleigh_extended(spec, g, s, c * v).value
    assert r2 == pytest.approx(r1, rel=1e-12)


def test_grad_v_homogeneity():
    g = build_grid(1, (1.0,), (15,))
    spec = scalar_abc(g)
    rng = np.random.default_rng(5)
    s, v = rng.uniform(0.1, 1, (1, g.size)), rng.uniform(0.1, 1, (1, g.size))
    np.testing.assert_allclose(quotient_grad_v(spec, g, s, 2 * v), 0.5 * quotient_grad_v(spec, g, s, v),
                               rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("builder", [scalar_abc, lambda g: power_coupled(g, m=2, b_i=0.5)])
def test_gradients_match_differences(builder):
    g = build_grid(1, (1.0,), (15,))
    spec = builder(g)
    rng = np.random.default_rng(6)
    for _ in range(10):
        s = rng.uniform(0.2, 1.0, (spec.m, g.size))
        v = rng.uniform(0.2, 1.0, (spec.m, g.size))
        xi = rng.uniform(-1, 1, s.shape)
        fd_v = _fd_pairing(lambda x: rayleigh_extended(spec, g, s, x).value, v, xi)
        an_v = g.weight * np.sum(quotient_grad_v(spec, g, s, v) * xi)
        assert an_v == pytest.approx(fd_v, rel=1e-5, abs=1e-9)
        fd_u = _fd_pairing(lambda x: rayleigh_extended(spec, g, x, v).value, s, 0.1 * xi)
        an_u = g.weight * np.sum(quotient_grad_u(spec, g, s, v) * 0.1 * xi)
        assert an_u == pytest.approx(fd_u, rel=1e-5, abs=1e-9)


def test_constant_on_solutions(abc127):
    grid, spec = abc127.grid, abc127.spec
    rng = np.random.default_rng(7)
    for p in abc127.branch.points[::7]:
        for _ in range(10):
            v = rng.uniform(0.1, 1.0, p.state.shape)
            q = rayleigh_extended(spec, grid, p.state, v)
            bound = p.residual * l2_norm(grid, v) / abs(q.denominator)
            assert abs(q.value - p.lam) <= 1.01 * bound + 1e-12 * p.lam
        grad = quotient_grad_v(spec, grid, p.state, p.state)
        den = rayleigh_extended(spec, grid, p.state, p.state).denominator
        assert l2_norm(grid, grad) <= 2 * p.residual / abs(den) + 1e-9


def test_degenerate_denominator(tiny):
    spec = scalar_abc(tiny)
    s = np.array([[0.25, 0.5, 0.25]])
    with pytest.raises(DenominatorDegenerate):
        rayleigh_extended(spec, tiny, s, np.array([[1.0, 0.0, -1.0]]))


def test_state_outside_cone(tiny):
    with pytest.raises(ConeViolation):
        rayleigh_extended(scalar_abc(tiny), tiny, np.array([[0.25, 0.0, 0.25]]), np.ones((1, 3)))


def test_grad_u_at_fold(abc127):
    f = abc127.fold
    grad = quotient_grad_u(abc127.spec, abc127.grid, f.state, f.null_vector)
    assert l2_norm(abc127.grid, grad) <= 1e-6 * (1 + l2_norm(abc127.grid, f.null_vector))


def test_grad_u_generic_nonzero(abc127):
    p = abc127.branch.points[5]
    v = np.random.default_rng(8).uniform(0.1, 1, p.state.shape)
    assert l2_norm(abc127.grid, quotient_grad_u(abc127.spec, abc127.grid, p.state, v)) > 1e-3


def test_probe_on_branch_solution(abc127):
    p = abc127.branch.points[12]
    res = inner_inf_probe(abc127.spec, abc127.grid, p.state, trials=100)
    assert res.kind == CONSTANT
    den = rayleigh_extended(abc127.spec, abc127.grid, p.state, p.state).denominator
    assert abs(res.value - p.lam) <= 1.01 * p.residual * l2_norm(abc127.grid, p.state) / den
    assert res.spread <= 1e-8 * p.lam


def test_probe_on_baseline(abc127):
    res = inner_inf_probe(abc127.spec, abc127.grid, abc127.wbar)
    assert res.kind == CONSTANT and abs(res.value) <= 1e-4


def test_probe_on_non_solution(abc127):
    s = abc127.wbar + 0.3 * abc127.grid.d
    res = inner_inf_probe(abc127.spec, abc127.grid, s)
    assert res.kind == UNBOUNDED_BELOW
    assert res.value <= -1e6
    values = [r for _, r in res.certificate]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_minimizing_sequence_on_solution(abc127):
    p = abc127.branch.points[8]
    rep = minimizing_sequence_test(abc127.spec, abc127.grid, p.state, 20)
    den = rayleigh_extended(abc127.spec, abc127.grid, p.state, p.state).denominator
    assert max(rep.grad_norms) <= 10 * p.residual * l2_norm(abc127.grid, p.state) / den**2 + 1e-6
    assert np.ptp(rep.values) <= 1e-6 * p.lam


def test_minimizing_sequence_plateau_off_solution(abc127):
    p = abc127.branch.points[8]
    rep = minimizing_sequence_test(abc127.spec, abc127.grid, p.state * (1 + 1e-3), 30)
    norms = np.array(rep.grad_norms)
    assert np.all(norms > 0.3 * norms[0]) and not rep.vanishing
    assert rep.values[-1] < rep.values[0]


def test_minimizing_sequence_empty(abc127):
    rep = minimizing_sequence_test(abc127.spec, abc127.grid, abc127.wbar, 0)
    assert rep.values == [] and rep.vanishing


def test_equivalence_at_fold(abc127):
    f = abc127.fold
    rep = criticality_equivalence_check(abc127.spec, abc127.grid, f.state, f.null_vector, f.lambda_star)
    assert rep.holds
    assert max(rep.left_max, rep.right_max) <= 1e-6


def test_equivalence_solution_with_generic_v(abc127):
    p = abc127.branch.points[10]
    v = np.random.default_rng(9).uniform(0.1, 1, p.state.shape)
    rep = criticality_equivalence_check(abc127.spec, abc127.grid, p.state, v, p.lam)
    assert rep.holds
    assert rep.right["F"] <= 1e-9 and rep.right["F_u_v"] > 1.0
    assert rep.left["grad_v"] <= 1e-3 and rep.left["grad_u"] > 1e3


def test_equivalence_generic_triple(abc127):
    rng = np.random.default_rng(10)
    s = abc127.wbar * rng.uniform(0.5, 2.0, abc127.wbar.shape)
    v = rng.uniform(0.1, 1, s.shape)
    rep = criticality_equivalence_check(abc127.spec, abc127.grid, s, v, 100.0)
    assert rep.holds
    assert rep.right_max > 1e-3 and rep.left_max > 1e-3
    # residual identity behind the bound
    F = residual_values(abc127.spec, abc127.grid, s, 100.0)
    assert rep.right["F"] == pytest.approx(l2_norm(abc127.grid, F))
