import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from saddlefold.mesh import build_grid
from saddlefold.spectral import (ASYMPTOTICALLY_STABLE, MARGINAL, UNSTABLE, classify_stability, default_tol,
                                 membership_Ws, principal_eigenvalue, smallest_eigenpair, smallest_singular_value,
                                 tag_for)


def test_pure_stencil(tiny):
    pair = smallest_eigenpair(tiny.stencil, tiny)
    assert pair.lambda1 == pytest.approx(32 * (1 - np.cos(np.pi / 4)), rel=1e-12)
    assert pair.lambda1 == pytest.approx(9.37258, abs=5e-6)
    assert tiny.weight * np.sum(pair.phi**2) == pytest.approx(1.0)
    assert np.all(pair.phi > 0)


@given(st.floats(-50.0, 50.0))
def test_shift(c):
    g = build_grid(1, (1.0,), (15,))
    base = smallest_eigenpair(g.stencil, g).lambda1
    shifted = smallest_eigenpair(g.stencil - c * sp.identity(g.size), g).lambda1
    assert shifted == pytest.approx(base - c, abs=1e-9 * (1 + abs(base)))


def test_two_identical_blocks():
    g = build_grid(1, (1.0,), (9,))
    A = sp.block_diag([g.stencil, g.stencil]).tocsc()
    pair = smallest_eigenpair(A, g)
    dense = np.linalg.eigvalsh(A.toarray())
    assert dense[1] - dense[0] < 1e-10  # multiplicity two
    assert pair.lambda1 == pytest.approx(dense[0], rel=1e-12)
    assert pair.residual <= 1e-8


def test_nonsymmetric_uses_symmetric_part():
    g = build_grid(1, (1.0,), (11,))
    rng = np.random.default_rng(0)
    K = sp.random(g.size, g.size, density=0.3, random_state=1) * 5.0
    A = (g.stencil + K).tocsc()
    dense = np.linalg.eigvalsh(0.5 * (A + A.T).toarray())[0]
    assert smallest_eigenpair(A, g).lambda1 == pytest.approx(dense, rel=1e-10)
    del rng


def test_principal_eigenvalue_nonsymmetric():
    g = build_grid(1, (1.0,), (11,))
    A = sp.bmat([[g.stencil, -sp.identity(g.size)], [-2 * sp.identity(g.size), g.stencil]]).tocsc()
    vals = np.linalg.eigvals(A.toarray())
    assert principal_eigenvalue(A, g).lambda1 == pytest.approx(np.min(vals.real), rel=1e-10)


def test_smallest_singular_value():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(20, 20)) + 8 * np.eye(20)
    sigma = np.linalg.svd(M, compute_uv=False)[-1]
    assert smallest_singular_value(sp.csc_matrix(M)) == pytest.approx(sigma, rel=1e-8)


def test_tags():
    assert tag_for(1.0, 1e-6).label == ASYMPTOTICALLY_STABLE
    assert tag_for(-1.0, 1e-6).label == UNSTABLE
    assert tag_for(5e-7, 1e-6).label == MARGINAL
    assert tag_for(5e-7, 1e-6).stable


def test_baseline_is_stable(abc127):
    tag = classify_stability(abc127.spec, abc127.grid, abc127.wbar, 0.0)
    assert tag.lambda1 >= -tag.tol
    assert tag.label == ASYMPTOTICALLY_STABLE


def test_low_branch_point_stable(abc127):
    p = abc127.branch.points[2]
    assert classify_stability(abc127.spec, abc127.grid, p.state, p.lam).label == ASYMPTOTICALLY_STABLE


def test_fold_is_marginal(abc127):
    f = abc127.fold
    assert classify_stability(abc127.spec, abc127.grid, f.state, f.lambda_star).label == MARGINAL


def test_membership_at_baseline(abc127):
    flag, tau = membership_Ws(abc127.spec, abc127.grid, abc127.wbar)
    assert flag
    assert abs(tau) <= 1e-4  # numerator is the lam=0 residual; denominator ~ 1e-7


def test_membership_on_branch(abc127):
    br = abc127.branch
    stable = br.points[10]
    flag, tau = membership_Ws(abc127.spec, abc127.grid, stable.state)
    assert flag and tau == pytest.approx(stable.lam, rel=1e-8)
    unstable = br.points[-1]
    assert unstable.lambda1 < 0
    assert not membership_Ws(abc127.spec, abc127.grid, unstable.state)[0]


def test_default_tol_scales_with_stencil(tiny):
    assert default_tol(tiny) == pytest.approx(1e-7 * (1 + tiny.stencil_lambda1))
