import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from saddlefold.errors import GridTooCoarse, ShapeError, UnsupportedDimension
from saddlefold.mesh import build_grid, inner_h1, integrate, l2_norm, laplacian_apply


def test_grid_1d_three_nodes(tiny):
    assert tiny.h == (0.25,)
    np.testing.assert_allclose(tiny.coords[:, 0], [0.25, 0.5, 0.75])
    np.testing.assert_allclose(tiny.d, [0.25, 0.5, 0.25])


def test_grid_2d_center_distance():
    g = build_grid(2, (1.0, 1.0), (3, 3))
    assert g.size == 9
    assert g.d[4] == pytest.approx(0.5)
    np.testing.assert_allclose(g.coords[4], [0.5, 0.5])


def test_grid_longer_interval():
    g = build_grid(1, (2.0,), (7,))
    assert g.h[0] == pytest.approx(0.25)
    assert g.d[0] == pytest.approx(0.25)


@pytest.mark.parametrize("dim", [0, 3])
def test_unsupported_dimension(dim):
    with pytest.raises(UnsupportedDimension):
        build_grid(dim, (1.0,) * max(dim, 1), (5,) * max(dim, 1))


def test_too_coarse():
    with pytest.raises(GridTooCoarse):
        build_grid(1, (1.0,), (2,))


def test_stencil_on_tent(tiny):
    np.testing.assert_allclose(laplacian_apply(tiny, [1.0, 2.0, 1.0]), [0.0, 32.0, 0.0])
    np.testing.assert_array_equal(laplacian_apply(tiny, np.zeros(3)), 0.0)


@pytest.mark.parametrize("n", [3, 15, 63])
def test_stencil_first_eigenvector(n):
    g = build_grid(1, (1.0,), (n,))
    f = np.sin(np.pi * g.coords[:, 0])
    h = g.h[0]
    lam = 2 * (1 - np.cos(np.pi * h)) / h**2
    np.testing.assert_allclose(laplacian_apply(g, f), lam * f, rtol=1e-12, atol=1e-12)
    # dense oracle
    assert np.linalg.eigvalsh(g.stencil.toarray())[0] == pytest.approx(lam, rel=1e-12)
    assert g.stencil_lambda1 == pytest.approx(lam, rel=1e-12)


def test_stencil_2d_eigenvalue_is_sum_of_axes():
    g = build_grid(2, (1.0, 2.0), (7, 9))
    dense = np.linalg.eigvalsh(g.stencil.toarray())[0]
    assert g.stencil_lambda1 == pytest.approx(dense, rel=1e-12)


def test_integrate(tiny):
    assert integrate(tiny, [1.0, 2.0, 1.0]) == pytest.approx(1.0)
    assert integrate(tiny, np.zeros(3)) == 0.0


def test_integrate_distance_function():
    g = build_grid(1, (1.0,), (7,))
    # exact: int_0^1 dist(x, {0,1}) dx = 1/4; midpoint-type rule on the tent is O(h^2)
    assert abs(integrate(g, g.d) - 0.25) <= g.h[0] ** 2


def test_inner_h1_tent(tiny):
    f = np.array([0.25, 0.5, 0.25])
    assert inner_h1(tiny, f, f) == pytest.approx(1.0)
    assert inner_h1(tiny, f, np.zeros(3)) == 0.0


def test_shape_mismatch(tiny):
    with pytest.raises(ShapeError):
        integrate(tiny, np.ones(4))


@given(arrays(float, 15, elements=st.floats(-10, 10)), arrays(float, 15, elements=st.floats(-10, 10)))
def test_inner_h1_symmetric_and_positive(f1, f2):
    g = build_grid(1, (1.0,), (15,))
    a, b = inner_h1(g, f1, f2), inner_h1(g, f2, f1)
    assert abs(a - b) <= 1e-12 * (1 + abs(a))
    assert inner_h1(g, f1, f1) >= g.stencil_lambda1 * l2_norm(g, f1) ** 2 * (1 - 1e-10) - 1e-10


@given(st.integers(3, 12), st.integers(3, 12), st.floats(0.5, 3.0), st.floats(0.5, 3.0))
def test_grid_2d_distance_and_volume(nx, ny, lx, ly):
    g = build_grid(2, (lx, ly), (nx, ny))
    assert g.size == nx * ny
    assert g.weight * (nx + 1) * (ny + 1) == pytest.approx(g.volume)
    assert np.all(g.d > 0) and np.all(g.d <= min(lx, ly) / 2 + 1e-12)
