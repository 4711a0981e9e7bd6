"""Problem definition for -Lap u_i = a_i u_i^q_i + lam g_i(x, u).

States are arrays of shape ``(m, N)``: one row per component, one column per
interior grid node.  Nonlinearity families evaluate nodewise and return

* ``g(u)``        -> ``(m, N)``
* ``jac(u)``      -> ``(m, m, N)`` with ``jac[i, j] = d g_i / d u_j``
* ``hess_vec(u, v)`` -> ``(m, m, N)`` with ``[i, k] = sum_j d^2 g_i / du_j du_k v_j``
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import ConeViolation, InvariantViolation, ShapeError
from .mesh import Grid


def _signed_power(u, p):
    return np.sign(u) * np.abs(u) ** p


@dataclass(frozen=True, eq=False)
class PowerCoupled:
    """g_i = b_i u_i + b * sum_j |u_j|^(gamma-1) u_j."""

    b_i: np.ndarray  # (m, N), >= 0
    b: np.ndarray  # (N,), >= 0
    gamma: float
    tag = "power-coupled"

    def __post_init__(self):
        if np.any(self.b_i < 0) or np.any(self.b < 0):
            raise InvariantViolation("coupling coefficients b_i, b must be nonnegative")

    @property
    def m(self):
        return self.b_i.shape[0]

    def g(self, u):
        coupled = self.b * _signed_power(u, self.gamma).sum(axis=0)
        return self.b_i * u + coupled[None, :]

    def jac(self, u):
        m, n = u.shape
        col = self.gamma * self.b * np.abs(u) ** (self.gamma - 1)  # (m, N): d/du_j
        out = np.broadcast_to(col[None, :, :], (m, m, n)).copy()
        idx = np.arange(m)
        out[idx, idx] += self.b_i
        return out

    def hess_vec(self, u, v):
        m, n = u.shape
        diag = self.gamma * (self.gamma - 1) * self.b * _signed_power(u, self.gamma - 2) * v
        # sum_j d^2 g_i/du_j du_k v_j is nonzero only for j == k, same for every i
        return np.broadcast_to(diag[None, :, :], (m, m, n)).copy()


@dataclass(frozen=True, eq=False)
class ScalarPower:
    """g = b u^gamma for a single equation."""

    b: np.ndarray  # (N,)
    gamma: float
    tag = "scalar-power"

    def __post_init__(self):
        if np.any(self.b < 0):
            raise InvariantViolation("coefficient b must be nonnegative")

    @property
    def m(self):
        return 1

    def g(self, u):
        return self.b * _signed_power(u, self.gamma)

    def jac(self, u):
        return (self.gamma * self.b * np.abs(u) ** (self.gamma - 1))[None, :, :]

    def hess_vec(self, u, v):
        return (self.gamma * (self.gamma - 1) * self.b * _signed_power(u, self.gamma - 2) * v)[None, :, :]


@dataclass(frozen=True, eq=False)
class CustomTable:
    """Single-equation nonlinearity g = b(x) G(u) with G tabulated.

    The table supplies G and G' at increasing abscissae; a cubic Hermite
    interpolant makes the evaluated G, G', G'' mutually consistent.
    """

    t: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    b: np.ndarray  # (N,)
    consistency_tol: float = 0.05
    tag = "custom-table"
    spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        t = np.asarray(self.t, float)
        if t.ndim != 1 or len(t) < 3 or np.any(np.diff(t) <= 0):
            raise InvariantViolation("table abscissae must be strictly increasing, at least 3 entries")
        vals = np.asarray(self.values, float)
        ders = np.asarray(self.derivatives, float)
        if vals.shape != t.shape or ders.shape != t.shape:
            raise ShapeError("table values and derivatives must match the abscissae")
        # tabulated derivatives against differences of tabulated values
        fd = np.gradient(vals, t)
        scale = float(np.max(np.abs(ders))) + 1e-300
        worst = float(np.max(np.abs(fd - ders)[1:-1])) / scale
        if worst > self.consistency_tol:
            raise InvariantViolation(
                f"tabulated g' disagrees with differences of tabulated g (worst relative gap {worst:.3g})")
        object.__setattr__(self, "spline", CubicHermiteSpline(t, vals, ders, extrapolate=True))

    @property
    def m(self):
        return 1

    def g(self, u):
        return self.b * self.spline(u)

    def jac(self, u):
        return (self.b * self.spline(u, 1))[None, :, :]

    def hess_vec(self, u, v):
        return (self.b * self.spline(u, 2) * v)[None, :, :]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    m: int
    space_dim: int
    q: np.ndarray  # (m,)
    a: np.ndarray  # (m, N)
    family: object
    gamma: float
    gamma0: float
    growth_constants: tuple = (1.0, 1.0)  # (c0, c1)
    coercivity_constants: tuple = (0.0, 0.0)  # (c2, c3)

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, float))
        object.__setattr__(self, "q", q)
        a = np.atleast_2d(np.asarray(self.a, float))
        object.__setattr__(self, "a", a)
        if self.m < 1:
            raise InvariantViolation("need at least one equation (m >= 1)")
        if q.shape != (self.m,):
            raise ShapeError(f"q must have {self.m} entries")
        if np.any((q <= 0) | (q >= 1)):
            raise InvariantViolation(f"q_i must lie in (0,1), got {q.tolist()}")
        if a.shape[0] != self.m:
            raise ShapeError(f"a must have {self.m} rows")
        if np.any(a <= 0):
            raise InvariantViolation("coefficients a_i(x) must be positive at every node")
        if not self.gamma > 1:
            raise InvariantViolation(f"gamma must exceed 1, got {self.gamma}")
        if not 1 < self.gamma0 <= self.gamma:
            raise InvariantViolation(f"gamma0 must lie in (1, gamma], got {self.gamma0}")
        if self.family.m != self.m:
            raise ShapeError(f"nonlinearity family has {self.family.m} components, problem has {self.m}")
        if self.space_dim < 1:
            raise InvariantViolation("space dimension must be >= 1")

    @property
    def n(self):
        return self.a.shape[1]


def _field(grid: Grid, value, name):
    arr = np.asarray(value, float)
    if arr.ndim == 0:
        return np.full(grid.size, float(arr))
    return grid.check_field(arr, name)


def scalar_abc(grid: Grid, q=0.5, gamma=3.0, a=1.0, b=1.0, **kw) -> ProblemSpec:
    """Concave-convex scalar model: -Lap u = a u^q + lam b u^gamma."""
    fam = ScalarPower(_field(grid, b, "b"), float(gamma))
    kw.setdefault("growth_constants", (0.0, float(np.max(fam.b))))
    kw.setdefault("coercivity_constants", (0.0, (gamma - 1) * float(np.min(fam.b))))
    return ProblemSpec(1, kw.pop("space_dim", grid.dim), np.array([q]), _field(grid, a, "a")[None, :],
                       fam, float(gamma), kw.pop("gamma0", float(gamma)), **kw)


def _component_fields(grid: Grid, value, m, name):
    arr = np.asarray(value, float)
    if arr.ndim == 2:
        if arr.shape != (m, grid.size):
            raise ShapeError(f"{name} must have shape ({m}, {grid.size})")
        return arr
    return np.array([np.full(grid.size, v) for v in np.broadcast_to(arr, (m,))])


def power_coupled(grid: Grid, m=2, q=0.5, gamma=3.0, a=1.0, b_i=0.0, b=1.0, **kw) -> ProblemSpec:
    """m-component system with g_i = b_i u_i + b sum_j |u_j|^(gamma-1) u_j."""
    q = np.broadcast_to(np.asarray(q, float), (m,)).copy()
    fam = PowerCoupled(_component_fields(grid, b_i, m, "b_i"), _field(grid, b, "b"), float(gamma))
    return ProblemSpec(m, kw.pop("space_dim", grid.dim), q, _component_fields(grid, a, m, "a"), fam,
                       float(gamma), kw.pop("gamma0", float(gamma)), **kw)


def _check_cone(s):
    s = np.asarray(s, float)
    if np.any(s < 0):
        raise ConeViolation("state has negative components")
    return s


def eval_g(spec: ProblemSpec, s) -> np.ndarray:
    return spec.family.g(_check_cone(s))


def eval_g_jacobian(spec: ProblemSpec, s) -> np.ndarray:
    return spec.family.jac(_check_cone(s))


@dataclass
class CheckReport:
    passed: bool
    worst: float
    details: dict = field(default_factory=dict)


def _sample_states(spec, samples):
    for u in samples:
        u = np.broadcast_to(np.asarray(u, float), (spec.m,))
        if np.any(u < 0):
            raise ConeViolation("samples must lie in the nonnegative cone")
        yield u, np.repeat(u[:, None], spec.n, axis=1)


def check_growth_g1(spec: ProblemSpec, samples) -> CheckReport:
    """Worst ratio g_i / (c0 |u| + c1 |u|^gamma) over samples and nodes (verified on samples only)."""
    c0, c1 = spec.growth_constants
    worst, negative = 0.0, False
    for u, state in _sample_states(spec, samples):
        g = spec.family.g(state)
        negative |= bool(np.any(g < 0))
        norm = float(np.linalg.norm(u))
        bound = c0 * norm + c1 * norm**spec.gamma
        gmax = float(np.max(g))
        if bound > 0:
            worst = max(worst, gmax / bound)
        elif gmax > 0:
            worst = np.inf
    return CheckReport(worst <= 1.0 + 1e-12 and not negative, worst,
                       {"negative_values": negative, "note": "verified on samples"})


def check_coercivity_g2(spec: ProblemSpec, samples) -> CheckReport:
    """sum_i (g_i,u_i u_i^2 - g_i u_i) >= c2 |u|^(gamma0+1) + c3 |u|^(gamma+1) on samples.

    The summed reading decides ``passed``; the stricter per-index reading is
    reported alongside.
    """
    c2, c3 = spec.coercivity_constants
    worst = np.inf
    worst_per_index = np.inf
    for u, state in _sample_states(spec, samples):
        g = spec.family.g(state)
        diag = np.einsum("iin->in", spec.family.jac(state))
        per_index = diag * state**2 - g * state  # (m, N)
        norm = float(np.linalg.norm(u))
        rhs = c2 * norm ** (spec.gamma0 + 1) + c3 * norm ** (spec.gamma + 1)
        # margins within rounding of the equality case count as zero
        slack = 1e-12 * (float(np.max(np.abs(per_index).sum(axis=0))) + rhs)
        worst = min(worst, float(np.min(per_index.sum(axis=0) - rhs)) + slack)
        worst_per_index = min(worst_per_index, float(np.min(per_index - rhs)) + slack)
    return CheckReport(worst >= 0, worst,
                       {"per_index_margin": worst_per_index, "per_index_passed": worst_per_index >= 0,
                        "note": "verified on samples"})


def critical_exponent(d: int) -> float:
    return np.inf if d <= 2 else 2.0 * d / (d - 2)


def check_theorem_hypotheses(spec: ProblemSpec) -> CheckReport:
    d = spec.space_dim
    crit = critical_exponent(d)
    q_bound = np.inf if d <= 2 else 2.0 / (d - 2)
    gamma_ok = bool(spec.gamma < crit)
    q_ok = bool(np.all(spec.q < q_bound))
    g0_ok = bool(1 < spec.gamma0 <= spec.gamma)
    return CheckReport(gamma_ok and q_ok and g0_ok, float(np.max(spec.q)),
                       {"critical_exponent": crit, "q_bound": q_bound, "gamma_subcritical": gamma_ok,
                        "q_below_bound": q_ok, "gamma0_in_range": g0_ok})
