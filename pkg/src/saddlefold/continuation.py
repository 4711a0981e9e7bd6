"""Branch tracing, fold detection and refinement, and the minimax estimate of lam*.

Continuation works in scaled coordinates x = (u / U, lam / Lam), with U the
L2 norm of the starting state and Lam chosen so that the initial tangent
splits evenly between u and lam.  Arclengths are therefore dimensionless;
``Branch.lambda_scale`` converts them back to lam units.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (AugmentedSingularity, ConeExit, CorrectorFailure, CriteriaDisagree, InsufficientPoints,
                     MaxIterationsExceeded, NoFoldFound, SingularJacobian, SolverError)
from .mesh import Grid, l2_norm
from .model import ProblemSpec
from .operator import (EPS, NewtonOptions, as_state, assemble_jacobian, factorize, g_jacobian_matrix,
                       jacobian_vector_derivative, newton_solve, residual_values, roundoff_floor, stencil_apply)
from .quotient import CONSTANT, inner_inf_probe, rayleigh_extended
from .spectral import (ASYMPTOTICALLY_STABLE, UNSTABLE, StabilityTag, default_tol, principal_eigenvalue,
                       smallest_eigenpair, smallest_singular_value, tag_for)
from .sublinear import comparison_check


# --------------------------------------------------------------------------- data


@dataclass
class BranchPoint:
    lam: float
    state: np.ndarray
    lambda1: float
    stability: StabilityTag
    arclength: float
    norms: tuple  # (|u|_{1,2}, |u|_{gamma0}, |u|_{gamma})
    residual: float
    dlam_ds: float = np.nan
    step: float = 0.0
    min_u_over_d: float = np.nan


@dataclass
class Branch:
    points: list
    fold_markers: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def lambdas(self):
        return np.array([p.lam for p in self.points])

    @property
    def lambda_scale(self):
        return self.meta.get("lambda_scale", 1.0)

    def __len__(self):
        return len(self.points)


@dataclass
class FoldPoint:
    lambda_star: float
    state: np.ndarray
    null_vector: np.ndarray
    residual_F: float
    residual_Fv: float
    lambda1_sym: float
    smallest_singular_value: float
    principal_eigenvalue: float
    iterations: int
    normalization_id: str = "mass-l2-unit/positive-at-max"

    def to_json(self, grid: Grid) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "residual_F": self.residual_F,
            "residual_Fv": self.residual_Fv,
            "lambda1_sym": self.lambda1_sym,
            "smallest_singular_value": self.smallest_singular_value,
            "principal_eigenvalue": self.principal_eigenvalue,
            "iterations": self.iterations,
            "grid": {"dim": grid.dim, "n": list(grid.n_per_axis), "h": list(grid.h)},
            "normalization_id": self.normalization_id,
        }


@dataclass
class ContinuationOptions:
    ds: float = 0.02
    ds_max: float = 0.05
    ds_fold: float = 0.004
    fold_zone: float = 0.15  # densify while |lambda1| < fold_zone * lambda1(start)
    ds_min_factor: float = 1e-6
    max_steps: int = 2000
    arclength: float = np.inf
    lambda_min: float = 0.0
    lambda_max: float = np.inf
    post_fold_arclength: float = 0.5
    tol: float = 1e-10
    corrector_max_iter: int = 10
    lambda_scale: float | None = None


# --------------------------------------------------------------------------- helpers


def state_norms(spec: ProblemSpec, grid: Grid, s) -> tuple:
    """(|u|_{1,2}, |u|_{gamma0}, |u|_{gamma}) with the pointwise Euclidean |u(x)|."""
    h1 = np.sqrt(grid.weight * float(np.sum(stencil_apply(grid, s) * s)))
    mod = np.sqrt(np.sum(s * s, axis=0))
    lg0 = (grid.weight * np.sum(mod**spec.gamma0)) ** (1 / spec.gamma0)
    lg = (grid.weight * np.sum(mod**spec.gamma)) ** (1 / spec.gamma)
    return float(h1), float(lg0), float(lg)


def h1_distance(grid: Grid, s1, s2) -> float:
    diff = np.atleast_2d(s1 - s2)
    return float(np.sqrt(grid.weight * np.sum(stencil_apply(grid, diff) * diff)))


def make_point(spec, grid, s, lam, arclength=0.0, dlam_ds=np.nan, step=0.0, tol=None) -> BranchPoint:
    s = as_state(spec, grid, s)
    J = assemble_jacobian(spec, grid, s, lam)
    lam1 = smallest_eigenpair(J, grid).lambda1
    point = BranchPoint(float(lam), s, lam1, tag_for(lam1, default_tol(grid) if tol is None else tol),
                        float(arclength), state_norms(spec, grid, s),
                        l2_norm(grid, residual_values(spec, grid, s, lam)), float(dlam_ds), float(step),
                        float(np.min(s / grid.d)))
    return point


def _bordered(top_left, col, row, corner):
    n = top_left.shape[0]
    return sp.bmat([[top_left, sp.csc_matrix(col.reshape(n, 1))],
                    [sp.csr_matrix(row.reshape(1, n)), sp.csr_matrix([[corner]])]], format="csc")


class _Scaled:
    """Scaled continuation coordinates and the matching inner product."""

    def __init__(self, grid, U, Lam, shape):
        self.grid, self.U, self.Lam, self.shape = grid, U, Lam, shape

    def pack(self, s, lam):
        return np.concatenate([s.ravel() / self.U, [lam / self.Lam]])

    def unpack(self, x):
        return x[:-1].reshape(self.shape) * self.U, float(x[-1] * self.Lam)

    def dot(self, x, y):
        return self.grid.weight * float(x[:-1] @ y[:-1]) + float(x[-1] * y[-1])

    def norm(self, x):
        return np.sqrt(self.dot(x, x))


def _tangent(spec, grid, sc, s, lam, prev):
    """Unit tangent at (s, lam) oriented along ``prev``."""
    J = assemble_jacobian(spec, grid, s, lam)
    g = spec.family.g(s).ravel()
    A = _bordered(sc.U * J, -sc.Lam * g, grid.weight * prev[:-1], prev[-1])
    rhs = np.zeros(A.shape[0])
    rhs[-1] = 1.0
    t = splu(A).solve(rhs)
    return t / sc.norm(t)


def _corrector(spec, grid, sc, x_pred, t, opts):
    x = x_pred.copy()
    for it in range(1, opts.corrector_max_iter + 1):
        s, lam = sc.unpack(x)
        if np.any(s <= 0):
            raise ConeExit("corrector left the positive cone")
        F = residual_values(spec, grid, s, lam)
        c = sc.dot(t, x - x_pred)
        if l2_norm(grid, F) <= max(opts.tol, roundoff_floor(grid, s)) and abs(c) <= 1e-12:
            return x, it - 1
        J = assemble_jacobian(spec, grid, s, lam)
        g = spec.family.g(s).ravel()
        A = _bordered(sc.U * J, -sc.Lam * g, grid.weight * t[:-1], t[-1])
        try:
            dx = splu(A).solve(-np.concatenate([F.ravel(), [c]]))
        except RuntimeError as exc:
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(dx)):
            raise SingularJacobian("non-finite corrector step")
        x = x + dx
    s, lam = sc.unpack(x)
    if np.all(s > 0) and l2_norm(grid, residual_values(spec, grid, s, lam)) <= max(opts.tol, roundoff_floor(grid, s)):
        return x, opts.corrector_max_iter
    raise MaxIterationsExceeded("corrector did not converge")


# --------------------------------------------------------------------------- tracing


def trace_branch(spec: ProblemSpec, grid: Grid, start: BranchPoint, opts: ContinuationOptions | None = None) -> Branch:
    """Pseudo-arclength continuation from ``start`` with secant predictor."""
    opts = opts or ContinuationOptions()
    s0 = start.state
    U = l2_norm(grid, s0)
    J0 = factorize(assemble_jacobian(spec, grid, s0, start.lam))
    du = J0.solve(spec.family.g(s0).ravel())
    Lam = opts.lambda_scale or U / l2_norm(grid, du)
    sc = _Scaled(grid, U, Lam, s0.shape)
    t = np.concatenate([du / U, [1.0 / Lam]])
    t /= sc.norm(t)
    start.dlam_ds = float(t[-1] * Lam)
    branch = Branch([start], [], {"lambda_scale": Lam, "state_scale": U, "ds_max": opts.ds_max,
                                  "grid": {"dim": grid.dim, "n": list(grid.n_per_axis)}})
    if opts.arclength <= 0 or opts.max_steps <= 0:
        return branch

    lam1_ref = abs(start.lambda1) if start.lambda1 != 0 else 1.0
    xs = [sc.pack(s0, start.lam)]
    ds = min(opts.ds, opts.ds_max)
    ds_min = opts.ds_min_factor * opts.ds
    arclength, fold_arclength = 0.0, None
    for _ in range(opts.max_steps):
        if abs(branch.points[-1].lambda1) < opts.fold_zone * lam1_ref:
            ds = min(ds, opts.ds_fold)
        if len(xs) >= 2:
            sec = xs[-1] - xs[-2]
            direction = sec / sc.norm(sec)
        else:
            direction = t
        while True:
            x_pred = xs[-1] + ds * direction
            try:
                x_new, iters = _corrector(spec, grid, sc, x_pred, direction, opts)
                break
            except SolverError:
                ds *= 0.5
                if ds < ds_min:
                    raise CorrectorFailure(f"step size fell below {ds_min:.2e}", branch=branch)
        s, lam = sc.unpack(x_new)
        if lam < opts.lambda_min or lam > opts.lambda_max:
            break
        step = sc.norm(x_new - xs[-1])
        t_new = _tangent(spec, grid, sc, s, lam, t)
        arclength += step
        point = make_point(spec, grid, s, lam, arclength, t_new[-1] * Lam, step)
        branch.points.append(point)
        if np.sign(t_new[-1]) != np.sign(t[-1]):
            branch.fold_markers.append(len(branch.points) - 2)
            if fold_arclength is None:
                fold_arclength = arclength
        xs.append(x_new)
        t = t_new
        if arclength >= opts.arclength:
            break
        if fold_arclength is not None and arclength - fold_arclength >= opts.post_fold_arclength:
            break
        if iters <= 3:
            ds = min(2 * ds, opts.ds_max)
        elif iters >= 8:
            ds = max(ds / 2, ds_min)
    return branch


def branch_start(spec, grid, wbar) -> BranchPoint:
    return make_point(spec, grid, wbar, 0.0)


# --------------------------------------------------------------------------- fold detection


@dataclass
class Bracket:
    lo: int
    hi: int
    eigen: tuple
    tangent: tuple


def detect_fold(branch: Branch) -> list:
    """Brackets where both lambda1 and dlam/ds change sign.

    The two sign changes must occur within one index of each other; the
    returned bracket spans both.
    """
    if len(branch) < 3:
        raise NoFoldFound("branch has fewer than 3 points")
    lam1 = np.array([p.lambda1 for p in branch.points])
    slope = np.array([p.dlam_ds for p in branch.points])
    eig = [k for k in range(len(lam1) - 1) if np.sign(lam1[k]) != np.sign(lam1[k + 1])]
    tan = [k for k in range(len(slope) - 1) if np.sign(slope[k]) != np.sign(slope[k + 1])]
    if not eig and not tan:
        raise NoFoldFound("neither lambda1 nor dlam/ds changes sign along the branch")
    pairs_e = [(k, k + 1) for k in eig]
    pairs_t = [(k, k + 1) for k in tan]
    if len(eig) != len(tan) or any(abs(e - k) > 1 for e, k in zip(eig, tan)):
        raise CriteriaDisagree("eigenvalue and tangent sign changes do not match", pairs_e, pairs_t)
    return [Bracket(min(e, k), max(e, k) + 1, (e, e + 1), (k, k + 1)) for e, k in zip(eig, tan)]


@dataclass
class FoldOptions:
    tol_F: float = 1e-10
    tol_Fv: float = 1e-8
    tol_norm: float = 1e-12
    max_iter: int = 40


def _unit_null_vector(grid, v):
    v = v / np.sqrt(grid.weight * np.sum(v * v))
    k = np.argmax(np.abs(v))
    return -v if v.flat[k] < 0 else v


def refine_fold_moore_spence(spec: ProblemSpec, grid: Grid, branch: Branch, bracket: Bracket,
                             opts: FoldOptions | None = None) -> FoldPoint:
    """Newton on {F(u, lam) = 0, F_u(u, lam) v = 0, int |v|^2 = 1}."""
    opts = opts or FoldOptions()
    p_lo, p_hi = branch.points[bracket.lo], branch.points[bracket.hi]
    s = 0.5 * (p_lo.state + p_hi.state)
    lam = 0.5 * (p_lo.lam + p_hi.lam)
    v = smallest_eigenpair(assemble_jacobian(spec, grid, s, lam), grid).phi
    Lam = max(1.0, abs(lam))
    w = grid.weight
    n = s.size
    for it in range(opts.max_iter + 1):
        J = assemble_jacobian(spec, grid, s, lam)
        F = residual_values(spec, grid, s, lam).ravel()
        Jv = J @ v.ravel()
        nres = w * float(v.ravel() @ v.ravel()) - 1.0
        rF, rFv = l2_norm(grid, F), l2_norm(grid, Jv)
        if rF <= max(opts.tol_F, roundoff_floor(grid, s)) and rFv <= opts.tol_Fv and abs(nres) <= opts.tol_norm:
            break
        if it == opts.max_iter:
            raise MaxIterationsExceeded(f"extended system did not converge (|F|={rF:.2e}, |F_u v|={rFv:.2e})",
                                        state=s)
        Gp = g_jacobian_matrix(spec, grid, s)
        H = jacobian_vector_derivative(spec, grid, s, lam, v)
        g = spec.family.g(s).ravel()
        zero = sp.csr_matrix((n, n))
        A = sp.bmat([
            [J, zero, sp.csc_matrix((-Lam * g).reshape(n, 1))],
            [H, J, sp.csc_matrix((-Lam * (Gp @ v.ravel())).reshape(n, 1))],
            [None, sp.csr_matrix((2 * w * v.ravel()).reshape(1, n)), sp.csr_matrix([[0.0]])],
        ], format="csc")
        try:
            lu = splu(A)
            diag = np.abs(lu.U.diagonal())
            if diag.min() <= 64 * EPS * diag.max():
                raise AugmentedSingularity("extended-system Jacobian is numerically singular")
            step = lu.solve(-np.concatenate([F, Jv, [nres]]))
        except RuntimeError as exc:
            raise AugmentedSingularity(f"extended-system Jacobian is singular: {exc}") from exc
        ds_, dv, dlam = step[:n].reshape(s.shape), step[n:2 * n].reshape(s.shape), step[-1] * Lam
        t = 1.0
        while np.any(s + t * ds_ <= 0):
            t *= 0.5
            if t < 1e-8:
                raise ConeExit("extended-system Newton left the positive cone", state=s)
        s, v, lam = s + t * ds_, v + t * dv, lam + t * dlam

    v = _unit_null_vector(grid, v)
    J = assemble_jacobian(spec, grid, s, lam)
    return FoldPoint(
        lambda_star=float(lam), state=s, null_vector=v,
        residual_F=l2_norm(grid, residual_values(spec, grid, s, lam)),
        residual_Fv=l2_norm(grid, J @ v.ravel()),
        lambda1_sym=smallest_eigenpair(J, grid).lambda1,
        smallest_singular_value=smallest_singular_value(J),
        principal_eigenvalue=principal_eigenvalue(J, grid).lambda1,
        iterations=it,
    )


# --------------------------------------------------------------------------- amplitude-parameterized solves


def amplitude_solve(spec, grid, direction, mu, s0, lam0, tol=1e-10, max_iter=30):
    """Solve F(u, lam) = 0 together with <direction, u> = mu for (u, lam)."""
    s, lam = as_state(spec, grid, s0).copy(), float(lam0)
    w = grid.weight
    e = direction.ravel()
    Lam = max(1.0, abs(lam))
    for _ in range(max_iter + 1):
        F = residual_values(spec, grid, s, lam).ravel()
        c = w * float(e @ s.ravel()) - mu
        if l2_norm(grid, F) <= max(tol, roundoff_floor(grid, s)) and abs(c) <= 1e-13 * max(abs(mu), 1e-300):
            return s, lam
        J = assemble_jacobian(spec, grid, s, lam)
        g = spec.family.g(s).ravel()
        A = _bordered(J, -Lam * g, w * e, 0.0)
        try:
            step = splu(A).solve(-np.concatenate([F, [c]]))
        except RuntimeError as exc:
            raise SingularJacobian(str(exc)) from exc
        ds_, dlam = step[:-1].reshape(s.shape), step[-1] * Lam
        t = 1.0
        while np.any(s + t * ds_ <= 0):
            t *= 0.5
            if t < 1e-8:
                raise ConeExit("amplitude solve left the cone", state=s)
        s, lam = s + t * ds_, lam + t * dlam
    raise MaxIterationsExceeded("amplitude-constrained Newton did not converge", state=s)


@dataclass
class BisectionFold:
    lambda_star: float
    amplitude: float
    state: np.ndarray
    lambda1: float
    steps: int


def _amplitude_setup(spec, grid, branch, bracket):
    lo = max(bracket.lo - 1, 0)
    hi = min(bracket.hi + 1, len(branch) - 1)
    p_lo, p_hi = branch.points[lo], branch.points[hi]
    mid = 0.5 * (p_lo.state + p_hi.state)
    e = smallest_eigenpair(assemble_jacobian(spec, grid, mid, 0.5 * (p_lo.lam + p_hi.lam)), grid).phi
    amp = [grid.weight * float(np.sum(e * p.state)) for p in (p_lo, p_hi)]
    return e, p_lo, p_hi, amp


def _interp_seed(p_lo, p_hi, amp, mu):
    theta = (mu - amp[0]) / (amp[1] - amp[0])
    return (1 - theta) * p_lo.state + theta * p_hi.state, (1 - theta) * p_lo.lam + theta * p_hi.lam


def fold_by_bisection(spec, grid, branch: Branch, bracket: Bracket, rtol: float = 1e-12, max_steps: int = 200):
    """Independent fold oracle: bisection in solution amplitude on the sign of lambda1.

    Solutions are parameterized by mu = <phi, u> (phi the principal
    eigenfunction near the bracket), which stays monotone through the fold.
    """
    e, p_lo, p_hi, amp = _amplitude_setup(spec, grid, branch, bracket)
    cache = {}

    def evaluate(mu, seed):
        s, lam = amplitude_solve(spec, grid, e, mu, *seed)
        lam1 = smallest_eigenpair(assemble_jacobian(spec, grid, s, lam), grid).lambda1
        cache[mu] = (s, lam, lam1)
        return s, lam, lam1

    a, b = amp
    _, _, l_a = evaluate(a, (p_lo.state, p_lo.lam))
    _, _, l_b = evaluate(b, (p_hi.state, p_hi.lam))
    if np.sign(l_a) == np.sign(l_b):
        raise NoFoldFound("lambda1 has the same sign at both ends of the amplitude bracket")
    steps = 0
    while abs(b - a) > rtol * max(abs(a), abs(b)) and steps < max_steps:
        mid = 0.5 * (a + b)
        near = a if abs(mid - a) <= abs(mid - b) else b
        s, lam, l_m = evaluate(mid, cache[near][:2])
        if np.sign(l_m) == np.sign(l_a):
            a, l_a = mid, l_m
        else:
            b, l_b = mid, l_m
        steps += 1
    best = a if abs(l_a) <= abs(l_b) else b
    s, lam, lam1 = cache[best]
    return BisectionFold(lam, best, s, lam1, steps)


def refine_minimax(spec, grid, branch: Branch, bracket: Bracket, rtol: float = 1e-10, probe_trials: int = 20,
                   max_steps: int = 200):
    """Sharpened minimax estimate: maximize the certified inner infimum over W_s near the fold.

    Candidate states are solutions parameterized by amplitude; each is kept only
    if the quotient probe certifies R(u, .) constant and lambda1(F_u(u, tau)) >= -tol.
    Golden-section search on the certified value.
    """
    e, p_lo, p_hi, amp = _amplitude_setup(spec, grid, branch, bracket)
    tol = default_tol(grid)
    cache = {}

    def value(mu):
        seed = _interp_seed(p_lo, p_hi, amp, mu)
        s, lam = amplitude_solve(spec, grid, e, mu, *seed)
        probe = inner_inf_probe(spec, grid, s, trials=probe_trials)
        if probe.kind != CONSTANT:
            return -np.inf
        lam1 = smallest_eigenpair(assemble_jacobian(spec, grid, s, probe.value), grid).lambda1
        val = probe.value if lam1 >= -tol else -np.inf
        cache[mu] = (val, s, lam1)
        return val

    invphi = (np.sqrt(5) - 1) / 2
    a, b = amp
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = value(c), value(d)
    steps = 0
    while abs(b - a) > rtol * max(abs(a), abs(b)) and steps < max_steps:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = value(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = value(d)
        steps += 1
    mu_best = max(cache, key=lambda k: cache[k][0])
    val, s, lam1 = cache[mu_best]
    return {"lambda_s": float(val), "amplitude": mu_best, "lambda1": lam1, "steps": steps, "state": s}


# --------------------------------------------------------------------------- minimax estimate and branch diagnostics


def lambda_star_minimax(spec, grid, branch: Branch, fold: FoldPoint | None = None, probe_trials: int = 20,
                        tol: float | None = None) -> dict:
    """Largest certified lam over W_s (and W_as) members among the branch points."""
    tol = default_tol(grid) if tol is None else tol
    Ws, Was, failures = [], [], []
    for k, p in enumerate(branch.points):
        if p.lam < 0:
            continue
        tau = rayleigh_extended(spec, grid, p.state, p.state).value
        lam1 = smallest_eigenpair(assemble_jacobian(spec, grid, p.state, tau), grid).lambda1
        if lam1 < -tol:
            continue
        probe = inner_inf_probe(spec, grid, p.state, trials=probe_trials, seed=k)
        if probe.kind != CONSTANT or abs(probe.value - p.lam) > 1e-6 * (1 + abs(p.lam)):
            failures.append(k)
            continue
        Ws.append((p.lam, k))
        if lam1 > tol:
            Was.append((p.lam, k))
    if not Ws:
        raise InsufficientPoints("no branch point is a certified member of W_s")
    lam_s, k_s = max(Ws)
    lam_as, k_as = max(Was) if Was else (np.nan, -1)
    steps = [branch.points[j].step for j in (k_s, k_s + 1) if 0 < j < len(branch)]
    local_step = branch.lambda_scale * max(steps) if steps else np.nan
    report = {
        "lambda_s_estimate": float(lam_s), "index_s": k_s,
        "lambda_as_estimate": float(lam_as), "index_as": k_as,
        "members_Ws": len(Ws), "members_Was": len(Was), "probe_failures": failures,
        "local_step_lambda": float(local_step),
        "as_below_s": bool(not Was or lam_as <= lam_s + 1e-12),
    }
    if fold is not None:
        report["gap_s"] = float(fold.lambda_star - lam_s)
        report["gap_as"] = float(fold.lambda_star - lam_as) if Was else np.nan
        report["within_two_steps"] = bool(abs(fold.lambda_star - lam_s) <= 2 * local_step)
    return report


def nonexistence_probe(spec, grid, lam: float, seeds: int, wbar=None, branch: Branch | None = None,
                       rng_seed: int = 0, newton: NewtonOptions | None = None) -> dict:
    """Newton from ``seeds`` diverse cone seeds at fixed lam; classify whatever converges."""
    report = {"lambda": lam, "seeds": 0, "converged": 0, "stable": 0, "unstable": 0, "failures": {},
              "stable_states": []}
    if seeds <= 0:
        return report
    newton = newton or NewtonOptions(max_iter=40)
    rng = np.random.default_rng(rng_seed)
    base = []
    if wbar is not None:
        base += [c * wbar for c in np.geomspace(0.5, 20.0, 6)]
    if branch is not None and len(branch):
        lams = branch.lambdas
        order = np.argsort(np.abs(lams - lam))
        base += [branch.points[k].state for k in order[:6]]
    if not base:
        raise ValueError("need a baseline state or a branch to build seeds")
    candidates = []
    for k in range(seeds):
        s = base[k % len(base)]
        if k >= len(base):
            s = s * rng.uniform(0.5, 2.0) * (1 + 0.3 * rng.uniform(-1, 1, size=s.shape))
        candidates.append(np.maximum(s, 1e-3 * float(np.max(s)) * grid.d / grid.d.max()))
    tol = default_tol(grid)
    for s0 in candidates:
        report["seeds"] += 1
        try:
            res = newton_solve(spec, grid, s0, lam, newton)
        except SolverError as exc:
            report["failures"][exc.code] = report["failures"].get(exc.code, 0) + 1
            continue
        report["converged"] += 1
        lam1 = smallest_eigenpair(assemble_jacobian(spec, grid, res.state, lam), grid).lambda1
        if lam1 >= -tol:
            report["stable"] += 1
            report["stable_states"].append(res.state)
        else:
            report["unstable"] += 1
    return report


def stable_sequence_extract(spec, grid, branch: Branch, fold: FoldPoint, count: int = 10) -> dict:
    """Asymptotically stable pre-fold points approaching the fold."""
    end = branch.fold_markers[0] + 1 if branch.fold_markers else len(branch)
    pre = [p for p in branch.points[:end] if p.stability.label == ASYMPTOTICALLY_STABLE]
    if not branch.fold_markers or len(pre) < 5:
        raise InsufficientPoints(f"need at least 5 asymptotically stable pre-fold points, have {len(pre)}")
    tail = pre[-count:]
    table = [(p.lam, h1_distance(grid, p.state, fold.state), p.lambda1) for p in tail]
    dist = np.array([r[1] for r in table])
    lam1 = np.array([r[2] for r in table])
    lams = np.array([r[0] for r in table])
    return {
        "table": table,
        "lambda_increasing": bool(np.all(np.diff(lams) > 0)),
        "distance_decreasing": bool(np.all(np.diff(dist) < 0)),
        "lambda1_decreasing": bool(np.all(np.diff(lam1) < 0)),
        "lambda1_last": float(lam1[-1]),
        "distance_last": float(dist[-1]),
    }


def two_solution_pairs(spec, grid, branch: Branch, count: int = 3, newton: NewtonOptions | None = None) -> list:
    """Pairs (lam, stable state, unstable state) at equal lam on both sides of the first fold."""
    if not branch.fold_markers:
        return []
    k_fold = branch.fold_markers[0] + 1
    pre, post = branch.points[:k_fold], branch.points[k_fold:]
    pre_lams = np.array([p.lam for p in pre])
    pairs = []
    for p in post:
        if p.stability.label != UNSTABLE or not pre_lams[0] < p.lam < pre_lams[-1]:
            continue
        j = int(np.searchsorted(pre_lams, p.lam))
        a, b = pre[j - 1], pre[j]
        theta = (p.lam - a.lam) / (b.lam - a.lam)
        stable = newton_solve(spec, grid, (1 - theta) * a.state + theta * b.state, p.lam, newton).state
        pairs.append({"lambda": p.lam, "stable": stable, "unstable": p.state,
                      "distance_h1": h1_distance(grid, stable, p.state)})
        if len(pairs) >= count:
            break
    return pairs


def observed_order(values, ratio: float = 2.0) -> dict:
    """Convergence order and Richardson extrapolation from three refinements (coarse to fine)."""
    v0, v1, v2 = values
    p = np.log(abs((v0 - v1) / (v1 - v2))) / np.log(ratio)
    extrap = v2 + (v2 - v1) / (ratio**p - 1)
    return {"order": float(p), "extrapolated": float(extrap), "error_estimate": float(abs(v2 - extrap))}


# --------------------------------------------------------------------------- invariant suite


def verify_branch(spec, grid, branch: Branch, wbar, barrier_tol: float = 1e-8) -> dict:
    """Runtime checks of the integral identities and the comparison barrier along a branch."""
    tol_l1 = default_tol(grid)
    checks = {"identity": [], "stability_inequality": [], "energy_bound": [], "barrier": [],
              "tag_consistency": [], "norms": []}
    w = grid.weight
    for k, p in enumerate(branch.points):
        s, lam = p.state, p.lam
        q = spec.q[:, None]
        h1sq = w * float(np.sum(stencil_apply(grid, s) * s))
        sub = w * float(np.sum(spec.a * s ** (q + 1)))
        g = spec.family.g(s)
        gu = w * float(np.sum(g * s))
        diag = np.einsum("iin->in", spec.family.jac(s))
        gdiag = w * float(np.sum(diag * s**2))
        res = l2_norm(grid, residual_values(spec, grid, s, lam))
        unorm = l2_norm(grid, s)
        slack = 10 * res * unorm + 10 * EPS * h1sq
        checks["identity"].append(abs(h1sq - sub - lam * gu) <= slack)
        if p.lambda1 >= -tol_l1:
            defect = h1sq - w * float(np.sum(q * spec.a * s ** (q + 1))) - lam * gdiag
            checks["stability_inequality"].append(defect >= -slack - max(0.0, -p.lambda1) * unorm**2)
            lhs = w * float(np.sum((1 - q) * spec.a * s ** (q + 1)))
            rhs = lam * (gdiag - gu)
            checks["energy_bound"].append(lhs >= rhs - 2 * slack - max(0.0, -p.lambda1) * unorm**2)
        if lam >= 0:
            checks["barrier"].append(comparison_check(grid, s, wbar, barrier_tol).passed)
        checks["tag_consistency"].append(tag_for(p.lambda1, p.stability.tol).label == p.stability.label)
        checks["norms"].append(bool(np.allclose(state_norms(spec, grid, s), p.norms, rtol=1e-12, atol=0)))
    arcs = [p.arclength for p in branch.points]
    summary = {name: {"passed": bool(all(vals)), "checked": len(vals), "failures": int(len(vals) - sum(vals))}
               for name, vals in checks.items()}
    summary["arclength_increasing"] = {"passed": bool(np.all(np.diff(arcs) > 0)), "checked": len(arcs) - 1,
                                       "failures": int(np.sum(np.diff(arcs) <= 0))}
    summary["passed"] = all(v["passed"] for v in summary.values() if isinstance(v, dict))
    return summary
