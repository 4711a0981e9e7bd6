"""Uniform finite-difference grids on an interval or a rectangle.

Fields live on interior nodes only; the homogeneous Dirichlet condition is
implicit.  In 2D nodes are ordered row-major over the ``(n1, n2)`` index
array, i.e. ``k = i1 * n2 + i2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .errors import GridTooCoarse, ShapeError, UnsupportedDimension


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    lengths: tuple
    n_per_axis: tuple
    h: tuple
    coords: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(np.prod(self.n_per_axis))

    @property
    def weight(self) -> float:
        """Quadrature weight of a single interior node."""
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @cached_property
    def stencil(self) -> sp.csc_matrix:
        """Matrix of the discrete -Laplacian (3-point / 5-point)."""
        blocks = [_second_difference(n, h) for n, h in zip(self.n_per_axis, self.h)]
        if self.dim == 1:
            return blocks[0].tocsc()
        n1, n2 = self.n_per_axis
        lap = sp.kron(blocks[0], sp.identity(n2)) + sp.kron(sp.identity(n1), blocks[1])
        return lap.tocsc()

    @cached_property
    def poisson_solve(self):
        """Factorized solver for ``stencil @ x = b``."""
        return factorized(self.stencil)

    @cached_property
    def stencil_lambda1(self) -> float:
        """Smallest eigenvalue of the stencil, in closed form."""
        return float(sum(_axis_eigenvalue(n, L) for n, L in zip(self.n_per_axis, self.lengths)))

    def check_field(self, f, name="field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.size,):
            raise ShapeError(f"{name} has shape {f.shape}, expected ({self.size},)")
        return f


def _axis_eigenvalue(n: int, length: float) -> float:
    h = length / (n + 1)
    return 2.0 * (1.0 - np.cos(np.pi * h / length)) / h**2


def _second_difference(n: int, h: float) -> sp.dia_matrix:
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1])


def build_grid(dim: int, lengths, n_per_axis) -> Grid:
    if dim not in (1, 2):
        raise UnsupportedDimension(f"only 1D and 2D grids are supported, got dim={dim}")
    lengths = tuple(float(x) for x in np.atleast_1d(lengths))
    n_per_axis = tuple(int(n) for n in np.atleast_1d(n_per_axis))
    if len(lengths) != dim or len(n_per_axis) != dim:
        raise ShapeError(f"need {dim} lengths and {dim} node counts")
    if any(L <= 0 for L in lengths):
        raise ValueError(f"domain lengths must be positive, got {lengths}")
    if any(n < 3 for n in n_per_axis):
        raise GridTooCoarse(f"need at least 3 interior nodes per axis, got {n_per_axis}")

    h = tuple(L / (n + 1) for L, n in zip(lengths, n_per_axis))
    axes = [h_k * np.arange(1, n + 1) for h_k, n in zip(h, n_per_axis)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    # distance to the nearest side of the box
    dist = np.minimum(coords, np.asarray(lengths) - coords)
    d = dist.min(axis=1)
    return Grid(dim, lengths, n_per_axis, h, coords, d)


def laplacian_apply(g: Grid, f) -> np.ndarray:
    """Discrete -Laplacian of ``f`` with zero boundary values."""
    return g.stencil @ g.check_field(f)


def integrate(g: Grid, f) -> float:
    return g.weight * float(np.sum(g.check_field(f)))


def inner_h1(g: Grid, f1, f2) -> float:
    """Discrete Dirichlet form, i.e. the integral of grad f1 . grad f2."""
    return integrate(g, laplacian_apply(g, f1) * g.check_field(f2))


def l2_norm(g: Grid, f) -> float:
    """Mass-weighted Euclidean norm of a field or of a stacked state."""
    f = np.asarray(f, dtype=float)
    return float(np.sqrt(g.weight * np.sum(f * f)))
