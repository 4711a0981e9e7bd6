"""The lam = 0 baseline: -Lap w = a_i w^q_i componentwise, its energy and barrier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidExponent, Stall
from .mesh import Grid, l2_norm
from .model import ProblemSpec
from .operator import as_state, assemble_jacobian, roundoff_floor, stencil_apply
from .spectral import default_tol, smallest_eigenpair


@dataclass
class FixedPointOptions:
    tol: float = 1e-12
    max_iter: int = 2000
    stall_window: int = 25


def _residual(grid, w, a, q):
    return l2_norm(grid, grid.stencil @ w - a * w**q)


def _sub_supersolution(grid, a, q):
    """Ordered pair eps*d <= M*z with z = (-Lap)^-1 a."""
    z = grid.poisson_solve(a)
    # M z is a supersolution iff M^(1-q) >= z^q nodewise
    M = max(1.0, float(np.max(z)) ** (q / (1 - q))) * 2.0
    eps = 1.0
    d = grid.d
    while np.any(grid.stencil @ (eps * d) > a * (eps * d) ** q) or np.any(eps * d > M * z):
        eps *= 0.5
        if eps < 1e-300:
            raise Stall("could not construct an ordered sub/supersolution pair")
    return eps * d, M * z


def solve_brezis_oswald(spec: ProblemSpec, grid: Grid, i: int, opts: FixedPointOptions | None = None,
                        seed=None, full_output: bool = False):
    """Positive solution of -Lap w = a_i w^q_i by the iteration w <- (-Lap)^-1 (a_i w^q_i).

    Without ``seed`` the iteration runs from a subsolution and from a
    supersolution at once; the two monotone sequences bracket the limit.
    """
    opts = opts or FixedPointOptions()
    q = float(spec.q[i])
    if not 0 < q < 1:
        raise InvalidExponent(f"q_{i} = {q} is outside (0,1)")
    a = spec.a[i]
    if seed is not None:
        seed = grid.check_field(seed, "seed")
        if not np.any(seed > 0):
            raise ValueError("seed must be positive somewhere; zero is the trivial fixed point")
        lower, upper = np.maximum(seed, 0.0), None
    else:
        lower, upper = _sub_supersolution(grid, a, q)

    def energy_1d(w):
        return 0.5 * grid.weight * w @ (grid.stencil @ w) - grid.weight * np.sum(a * w ** (q + 1)) / (q + 1)

    history = {"residual": [], "gap": [], "energy": [], "monotone": True}
    best, since_best = np.inf, 0
    for it in range(1, opts.max_iter + 1):
        new_lower = grid.poisson_solve(a * lower**q)
        if upper is not None:
            new_upper = grid.poisson_solve(a * upper**q)
            history["monotone"] &= bool(np.all(new_lower >= lower - 1e-14 * new_lower.max())
                                        and np.all(new_upper <= upper + 1e-14 * new_upper.max()))
            upper = new_upper
            history["gap"].append(float(np.max(upper - new_lower)))
        lower = new_lower
        history["energy"].append(float(energy_1d(lower)))
        res = _residual(grid, lower, a, q)
        if upper is not None:
            res = max(res, _residual(grid, upper, a, q))
        history["residual"].append(res)
        tol = max(opts.tol, roundoff_floor(grid, lower))
        if res <= tol:
            w = lower if upper is None else 0.5 * (lower + upper)
            info = {**history, "history": history["residual"], "iterations": it,
                    "residual": _residual(grid, w, a, q), "tol": tol}
            return (w, info) if full_output else w
        if res < 0.5 * best:
            best, since_best = res, 0
        else:
            since_best += 1
            if since_best > opts.stall_window:
                raise Stall(f"fixed-point residual stalled at {res:.3e}", state=lower)
    raise Stall(f"no convergence in {opts.max_iter} fixed-point steps", state=lower)


def energy(spec: ProblemSpec, grid: Grid, v) -> float:
    """E(v) = 1/2 sum_i |grad v_i|^2 - sum_i 1/(q_i+1) int a_i |v_i|^(q_i+1)."""
    v = as_state(spec, grid, v)
    dirichlet = 0.5 * grid.weight * float(np.sum(stencil_apply(grid, v) * v))
    q = spec.q[:, None]
    return dirichlet - grid.weight * float(np.sum(spec.a * np.abs(v) ** (q + 1) / (q + 1)))


def baseline_state(spec: ProblemSpec, grid: Grid, opts: FixedPointOptions | None = None):
    """(w_bar, report) with the stability eigenvalue at lam = 0 and the cone parameter."""
    comps, infos = [], []
    for i in range(spec.m):
        w, info = solve_brezis_oswald(spec, grid, i, opts, full_output=True)
        comps.append(w)
        infos.append(info)
    wbar = np.array(comps)
    pair = smallest_eigenpair(assemble_jacobian(spec, grid, wbar, 0.0), grid)
    report = {
        "lambda1": pair.lambda1,
        "lambda1_tol": default_tol(grid),
        "stable": bool(pair.lambda1 >= -default_tol(grid)),
        "delta_bar": float(np.min(wbar / grid.d)),
        "iterations": [inf["iterations"] for inf in infos],
        "residuals": [inf["residual"] for inf in infos],
        "bracket_gap": [inf["gap"][-1] if inf["gap"] else 0.0 for inf in infos],
        "monotone": [inf["monotone"] for inf in infos],
    }
    return wbar, report


@dataclass
class ComparisonReport:
    passed: bool
    worst_violation: float
    tol: float


def comparison_check(grid: Grid, s, wbar, tol: float = 1e-8) -> ComparisonReport:
    """s_i >= w_i - tol at every node and component."""
    s = np.atleast_2d(np.asarray(s, float))
    wbar = np.atleast_2d(np.asarray(wbar, float))
    worst = float(np.max(wbar - s))
    return ComparisonReport(worst <= tol, worst, tol)
