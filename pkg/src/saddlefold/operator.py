"""Residual F(u, lam), its linearization, and a cone-preserving Newton solver."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConeExit, ConeViolation, MaxIterationsExceeded, ShapeError, SingularJacobian
from .mesh import Grid, l2_norm
from .model import ProblemSpec

EPS = np.finfo(float).eps


def as_state(spec: ProblemSpec, grid: Grid, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape == (spec.m * grid.size,):
        s = s.reshape(spec.m, grid.size)
    if s.shape != (spec.m, grid.size):
        raise ShapeError(f"state has shape {s.shape}, expected ({spec.m}, {grid.size})")
    if not np.all(np.isfinite(s)):
        raise ValueError("state has non-finite entries")
    return s


def _require_open_cone(s):
    if np.any(s <= 0):
        raise ConeViolation("u^(q-1) is singular: state must be strictly positive at every interior node")


def stencil_apply(grid: Grid, s) -> np.ndarray:
    return (grid.stencil @ s.T).T


def sublinear_term(spec: ProblemSpec, s) -> np.ndarray:
    """a_i |u_i|^(q_i - 1) u_i."""
    return spec.a * np.sign(s) * np.abs(s) ** spec.q[:, None]


@dataclass
class Residual:
    values: np.ndarray  # (m, N)
    norm: float


def residual_values(spec, grid, s, lam) -> np.ndarray:
    return stencil_apply(grid, s) - sublinear_term(spec, s) - lam * spec.family.g(s)


def assemble_residual(spec: ProblemSpec, grid: Grid, s, lam: float) -> Residual:
    s = as_state(spec, grid, s)
    _require_open_cone(s)
    F = residual_values(spec, grid, s, lam)
    return Residual(F, l2_norm(grid, F))


def _block_diag_coupling(m, n, entries) -> sp.csr_matrix:
    """Sparse (mN x mN) matrix from nodewise (m, m, N) coefficient blocks."""
    rows, cols, vals = [], [], []
    idx = np.arange(n)
    for i in range(m):
        for j in range(m):
            e = entries[i, j]
            if np.any(e != 0):
                rows.append(i * n + idx)
                cols.append(j * n + idx)
                vals.append(e)
    if not vals:
        return sp.csr_matrix((m * n, m * n))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(m * n, m * n))


def assemble_jacobian(spec: ProblemSpec, grid: Grid, s, lam: float) -> sp.csc_matrix:
    """F_u(u, lam) = blockdiag(-Lap) - diag(q a u^(q-1)) - lam [g_i,u_j]."""
    s = as_state(spec, grid, s)
    _require_open_cone(s)
    m, n = s.shape
    lap = sp.block_diag([grid.stencil] * m)
    sub = sp.diags((spec.q[:, None] * spec.a * s ** (spec.q[:, None] - 1)).ravel())
    coupling = _block_diag_coupling(m, n, spec.family.jac(s))
    return (lap - sub - lam * coupling).tocsc()


def g_jacobian_matrix(spec, grid, s) -> sp.csr_matrix:
    m, n = s.shape
    return _block_diag_coupling(m, n, spec.family.jac(s))


def jacobian_vector_derivative(spec, grid, s, lam, v) -> sp.csr_matrix:
    """Matrix of xi -> d/du [F_u(u, lam) v] (xi)."""
    m, n = s.shape
    sub = spec.q[:, None] * (spec.q[:, None] - 1) * spec.a * s ** (spec.q[:, None] - 2) * v
    return -(sp.diags(sub.ravel()) + lam * _block_diag_coupling(m, n, spec.family.hess_vec(s, v))).tocsr()


def cone_membership(grid: Grid, s, delta: float) -> bool:
    s = np.atleast_2d(np.asarray(s, float))
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return bool(np.all(s > 0))
    return bool(np.all(s >= delta * grid.d))


def roundoff_floor(grid: Grid, s) -> float:
    """Residual level below which stencil cancellation makes further Newton progress meaningless."""
    lap_norm = 4.0 * grid.dim / min(grid.h) ** 2
    return 16 * EPS * lap_norm * float(np.max(np.abs(s))) * np.sqrt(grid.volume)


@dataclass
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 50
    delta_floor: float | None = None  # None -> 1e-8 * min(d)
    min_step: float = 1e-10
    armijo: float = 1e-4


@dataclass
class NewtonResult:
    state: np.ndarray
    iterations: int
    residual: float
    tol: float


def factorize(J):
    try:
        lu = splu(sp.csc_matrix(J))
    except RuntimeError as exc:  # exactly singular
        raise SingularJacobian(f"factorization failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    if diag.min() <= 64 * EPS * diag.max():
        raise SingularJacobian("Jacobian is numerically singular")
    return lu


def newton_solve(spec: ProblemSpec, grid: Grid, s0, lam: float, opts: NewtonOptions | None = None) -> NewtonResult:
    """Damped Newton for F(u, lam) = 0 keeping every iterate above delta_floor * d."""
    opts = opts or NewtonOptions()
    s = as_state(spec, grid, s0).copy()
    _require_open_cone(s)
    delta = opts.delta_floor if opts.delta_floor is not None else 1e-8 * float(grid.d.min())
    floor = delta * grid.d
    F = residual_values(spec, grid, s, lam)
    norm = l2_norm(grid, F)
    for it in range(opts.max_iter + 1):
        tol = max(opts.tol, roundoff_floor(grid, s))
        if norm <= tol:
            return NewtonResult(s, it, norm, tol)
        if it == opts.max_iter:
            break
        lu = factorize(assemble_jacobian(spec, grid, s, lam))
        step = lu.solve(-F.ravel()).reshape(s.shape)
        if not np.all(np.isfinite(step)):
            raise SingularJacobian("Newton step is not finite", state=s)
        t, left_cone = 1.0, True
        while t >= opts.min_step:
            trial = s + t * step
            if np.all(trial > floor):
                left_cone = False
                F_trial = residual_values(spec, grid, trial, lam)
                norm_trial = l2_norm(grid, F_trial)
                if norm_trial <= (1 - opts.armijo * t) * norm:
                    break
            t *= 0.5
        else:
            if left_cone:
                raise ConeExit(f"no step length keeps the iterate in the cone (iteration {it})", state=s)
            raise MaxIterationsExceeded(f"line search stagnated at residual {norm:.3e}", state=s)
        s, F, norm = trial, F_trial, norm_trial
    raise MaxIterationsExceeded(f"no convergence in {opts.max_iter} iterations (residual {norm:.3e})", state=s)
