"""Principal eigenvalue of the linearization and stability classification.

With the lumped (uniform) mass matrix the mass-weighted eigenproblem reduces
to the ordinary one, so the quadratic-form infimum over phi of
<F_u phi, phi> / <phi, phi> is the smallest eigenvalue of (A + A^T) / 2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import EigenNonconvergence
from .mesh import Grid
from .operator import as_state, assemble_jacobian

ASYMPTOTICALLY_STABLE = "asymptotically_stable"
MARGINAL = "marginal"
UNSTABLE = "unstable"


@dataclass
class EigenOptions:
    tol: float = 1e-11
    max_iter: int = 5000


@dataclass
class EigenPair:
    lambda1: float
    phi: np.ndarray  # (m, N), integral of |phi|^2 equal to 1
    iterations: int
    residual: float


@dataclass
class StabilityTag:
    label: str
    lambda1: float
    tol: float

    @property
    def stable(self) -> bool:
        return self.label != UNSTABLE


def _lower_bound(A) -> float:
    """Gershgorin lower bound on the spectrum."""
    A = sp.csr_matrix(A)
    diag = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - off))


def _normalize(grid, x, m):
    phi = x.reshape(m, grid.size)
    phi = phi / np.sqrt(grid.weight * np.sum(phi * phi))
    k = np.argmax(np.abs(phi))
    if phi.flat[k] < 0:
        phi = -phi
    return phi


def smallest_eigenpair(A, grid: Grid, opts: EigenOptions | None = None) -> EigenPair:
    """Smallest eigenvalue of the symmetric part of ``A`` by shifted inverse iteration."""
    opts = opts or EigenOptions()
    A = sp.csc_matrix(A)
    S = ((A + A.T) * 0.5).tocsc()
    n = S.shape[0]
    m = n // grid.size
    shift = _lower_bound(S) - 1.0
    lu = splu((S - shift * sp.identity(n, format="csc")).tocsc())
    x = np.ones(n) / np.sqrt(n)
    scale = 1.0 + abs(shift)
    mu, res = np.nan, np.inf
    for it in range(1, opts.max_iter + 1):
        y = lu.solve(x)
        x = y / np.linalg.norm(y)
        Sx = S @ x
        mu = float(x @ Sx)
        res = float(np.linalg.norm(Sx - mu * x))
        if res <= opts.tol * scale:
            return EigenPair(mu, _normalize(grid, x, m), it, res)
    raise EigenNonconvergence(f"inverse iteration stalled at residual {res:.3e} after {opts.max_iter} steps")


def principal_eigenvalue(A, grid: Grid, opts: EigenOptions | None = None) -> EigenPair:
    """Real eigenvalue of smallest real part of the full (nonsymmetric) ``A``.

    For cooperative linearizations this is the principal eigenvalue with a
    single-signed eigenvector.
    """
    opts = opts or EigenOptions()
    A = sp.csc_matrix(A)
    n = A.shape[0]
    m = n // grid.size
    shift = _lower_bound(A) - 1.0
    lu = splu((A - shift * sp.identity(n, format="csc")).tocsc())
    x = np.ones(n) / np.sqrt(n)
    scale = 1.0 + abs(shift)
    mu, res = np.nan, np.inf
    for it in range(1, opts.max_iter + 1):
        y = lu.solve(x)
        x = y / np.linalg.norm(y)
        Ax = A @ x
        mu = float(x @ Ax)
        res = float(np.linalg.norm(Ax - mu * x))
        if res <= opts.tol * scale:
            return EigenPair(mu, _normalize(grid, x, m), it, res)
    raise EigenNonconvergence(f"nonsymmetric inverse iteration stalled at residual {res:.3e}")


def smallest_singular_value(A, tol: float = 1e-12, max_iter: int = 500) -> float:
    """Smallest singular value via inverse iteration on A^T A."""
    A = sp.csc_matrix(A)
    try:
        lu = splu(A)
    except RuntimeError:
        return 0.0
    x = np.ones(A.shape[0]) / np.sqrt(A.shape[0])
    sigma = np.inf
    for _ in range(max_iter):
        y = lu.solve(lu.solve(x, trans="T"))
        ny = np.linalg.norm(y)
        if not np.isfinite(ny) or ny == 0:
            return 0.0
        x = y / ny
        new = float(np.linalg.norm(A @ x))
        if abs(new - sigma) <= tol * max(new, 1e-300):
            return new
        sigma = new
    return sigma


def default_tol(grid: Grid) -> float:
    return 1e-7 * (1.0 + grid.stencil_lambda1)


def tag_for(lambda1: float, tol: float) -> StabilityTag:
    if lambda1 > tol:
        label = ASYMPTOTICALLY_STABLE
    elif lambda1 < -tol:
        label = UNSTABLE
    else:
        label = MARGINAL
    return StabilityTag(label, lambda1, tol)


def classify_stability(spec, grid: Grid, s, lam: float, tol: float | None = None) -> StabilityTag:
    s = as_state(spec, grid, s)
    pair = smallest_eigenpair(assemble_jacobian(spec, grid, s, lam), grid)
    return tag_for(pair.lambda1, default_tol(grid) if tol is None else tol)


def membership_Ws(spec, grid: Grid, s, tol: float | None = None, strict: bool = False):
    """(is s in W_s, tau) with tau = R(s, s); ``strict=True`` tests W_as instead."""
    from .quotient import rayleigh_extended

    tau = rayleigh_extended(spec, grid, s, s).value
    lam1 = smallest_eigenpair(assemble_jacobian(spec, grid, s, tau), grid).lambda1
    tol = default_tol(grid) if tol is None else tol
    flag = lam1 > tol if strict else lam1 >= -tol
    return bool(flag), tau
