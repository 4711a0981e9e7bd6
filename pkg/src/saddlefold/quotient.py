"""Extended Rayleigh quotient R(u, v) and the diagnostics built on it.

    R(u, v) = [sum_i <grad u_i, grad v_i> - sum_i int a_i u_i^q_i v_i] / sum_i int g_i(x, u) v_i

Gradients are returned as Riesz representatives in the discrete L2 pairing
(``<f, xi> = weight * sum(f * xi)``), so functional norms are plain
mass-weighted L2 norms of the returned arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConeViolation, DenominatorDegenerate, ProbeInconclusive
from .mesh import Grid, l2_norm
from .operator import (as_state, assemble_jacobian, g_jacobian_matrix, residual_values, stencil_apply,
                       sublinear_term)

EPS_DEN = 1e-10

CONSTANT = "Constant"
UNBOUNDED_BELOW = "UnboundedBelow"


@dataclass
class QuotientValue:
    value: float
    numerator: float
    denominator: float


@dataclass
class InfProbeResult:
    kind: str
    value: float
    certificate: list = field(default_factory=list)  # [(v, R(u, v)), ...]
    spread: float = 0.0
    residual: float = 0.0


def _pair(grid, f1, f2):
    return grid.weight * float(np.sum(f1 * f2))


def _prepare(spec, grid, s, v):
    s = as_state(spec, grid, s)
    v = as_state(spec, grid, v)
    if np.any(s <= 0):
        raise ConeViolation("quotient needs a strictly positive state")
    return s, v


def _parts(spec, grid, s, v):
    """numerator residual r = -Lap s - a s^q, g(s), numerator and denominator."""
    r = stencil_apply(grid, s) - sublinear_term(spec, s)
    g = spec.family.g(s)
    num = _pair(grid, r, v)
    den = _pair(grid, g, v)
    if abs(den) < EPS_DEN * (1.0 + l2_norm(grid, g) * l2_norm(grid, v)):
        raise DenominatorDegenerate(f"int g(x,u) v = {den:.3e}: v is not in Sigma(u)")
    return r, g, num, den


def rayleigh_extended(spec, grid: Grid, s, v) -> QuotientValue:
    s, v = _prepare(spec, grid, s, v)
    _, _, num, den = _parts(spec, grid, s, v)
    return QuotientValue(num / den, num, den)


def quotient_grad_v(spec, grid: Grid, s, v) -> np.ndarray:
    """Riesz representative of xi -> R_v(s, v)(xi) = F(s, R)(xi) / int g v."""
    s, v = _prepare(spec, grid, s, v)
    r, g, num, den = _parts(spec, grid, s, v)
    return (r - (num / den) * g) / den


def quotient_grad_u(spec, grid: Grid, s, v) -> np.ndarray:
    """Riesz representative of xi -> R_u(s, v)(xi) = <F_u(s, R) xi, v> / int g v.

    Assembled by the quotient rule; in matrix terms it is F_u(s, R)^T v / den.
    """
    s, v = _prepare(spec, grid, s, v)
    _, _, num, den = _parts(spec, grid, s, v)
    J = assemble_jacobian(spec, grid, s, num / den)
    return (J.T @ v.ravel()).reshape(v.shape) / den


def random_admissible(rng, shape):
    """Strictly positive random test state; always in Sigma(u) for g > 0."""
    return rng.uniform(0.1, 1.0, size=shape)


def inner_inf_probe(spec, grid: Grid, s, trials: int = 100, tol: float = 1e-6,
                    residual_tol: float = 1e-8, seed: int = 0) -> InfProbeResult:
    """Decide which side of the dichotomy inf_v R(s, v) falls on.

    A solution gives R(s, .) constant (value lam = R(s, s)); otherwise the
    quotient is unbounded below along v_t = g/|g|^2 - t p/|p|^2 with p the
    part of the numerator residual orthogonal to g(s).  ``tol`` bounds the
    spread of R relative to max(1, |lam|) and sets the -1/tol descent target.
    """
    s = as_state(spec, grid, s)
    lam_hat = rayleigh_extended(spec, grid, s, s).value
    res = l2_norm(grid, residual_values(spec, grid, s, lam_hat))
    if res <= residual_tol:
        rng = np.random.default_rng(seed)
        values = [rayleigh_extended(spec, grid, s, random_admissible(rng, s.shape)).value
                  for _ in range(trials)]
        spread = float(np.ptp(values)) if values else 0.0
        if spread <= tol * max(1.0, abs(lam_hat)):
            return InfProbeResult(CONSTANT, lam_hat, spread=spread, residual=res)
        raise ProbeInconclusive(f"residual {res:.2e} is small but R spreads by {spread:.2e}")

    r = stencil_apply(grid, s) - sublinear_term(spec, s)
    g = spec.family.g(s)
    gg = _pair(grid, g, g)
    p = r - (_pair(grid, r, g) / gg) * g
    pp = _pair(grid, p, p)
    if pp <= (EPS_DEN * np.sqrt(_pair(grid, r, r))) ** 2:
        raise ProbeInconclusive("numerator residual is numerically parallel to g(u) but residual is not small")
    base = g / gg
    direction = p / pp
    certificate = []
    t = 1.0
    for _ in range(trials):
        v = base - t * direction
        R = rayleigh_extended(spec, grid, s, v).value
        certificate.append((v, R))
        if R <= -1.0 / tol:
            return InfProbeResult(UNBOUNDED_BELOW, R, certificate, residual=res)
        t *= 10.0
    raise ProbeInconclusive(f"quotient only reached {certificate[-1][1]:.3e} after {trials} trials")


@dataclass
class MinimizingSequenceReport:
    values: list
    grad_norms: list
    envelope: list
    vanishing: bool
    tol: float


def minimizing_sequence_test(spec, grid: Grid, s, k_max: int, step: float = 1e-3,
                             tol: float = 1e-6) -> MinimizingSequenceReport:
    """Descent on v -> R(s, v) under int g(s) v = 1, tracking |R_v(s, v_k)|.

    ``step`` is the length of each move relative to |v_0|.  ``envelope`` is the
    running supremum of the tail, ``vanishing`` says whether it ends below ``tol``.
    """
    s = as_state(spec, grid, s)
    if k_max <= 0:
        return MinimizingSequenceReport([], [], [], True, tol)
    g = spec.family.g(s)
    gg = _pair(grid, g, g)
    v = s / _pair(grid, g, s)
    length = step * l2_norm(grid, v)
    values, norms = [], []
    for _ in range(k_max):
        den = _pair(grid, g, v)
        if abs(den - 1.0) > 1e-8:
            raise DenominatorDegenerate("normalization int g v = 1 was lost")
        grad = quotient_grad_v(spec, grid, s, v)
        values.append(rayleigh_extended(spec, grid, s, v).value)
        norms.append(l2_norm(grid, grad))
        # project out the normal direction g so the constraint stays exact
        tangential = grad - (_pair(grid, grad, g) / gg) * g
        tn = l2_norm(grid, tangential)
        if tn == 0:
            continue
        v = v - length * tangential / tn
    envelope = list(np.maximum.accumulate(norms[::-1])[::-1])
    return MinimizingSequenceReport(values, norms, envelope, bool(envelope[-1] <= tol), tol)


@dataclass
class EquivalenceReport:
    left: dict
    right: dict
    bounds: dict
    left_max: float
    right_max: float
    asymmetry: float
    holds: bool


def criticality_equivalence_check(spec, grid: Grid, s, v, lam: float, rtol: float = 1e-8) -> EquivalenceReport:
    """Compare the quotient-side residuals with the extended-system residuals.

    Left: |lam - R|, |R_v|, |R_u|.  Right: |F(s, lam)|, |F_u(s, lam) v|.
    The exact algebraic links used as ratio bounds are

        |F|       <= |den| |R_v| + |lam - R| |g|
        |lam - R| <= |F| |v| / |den|
        |R_v|     <= (|F| + |lam - R| |g|) / |den|
        |F_u v|   <= |den| |R_u| + |lam - R| |G'^T v| + asym
        |R_u|     <= (|F_u v| + |lam - R| |G'^T v| + asym) / |den|

    where asym = lam |(G' - G'^T) v| measures the left/right null-vector gap.
    """
    s, v = _prepare(spec, grid, s, v)
    q = rayleigh_extended(spec, grid, s, v)
    R, den = q.value, q.denominator
    grad_v = quotient_grad_v(spec, grid, s, v)
    grad_u = quotient_grad_u(spec, grid, s, v)
    F = residual_values(spec, grid, s, lam)
    J = assemble_jacobian(spec, grid, s, lam)
    Gp = g_jacobian_matrix(spec, grid, s)
    vf = v.ravel()
    left = {"lambda_gap": abs(lam - R), "grad_v": l2_norm(grid, grad_v), "grad_u": l2_norm(grid, grad_u)}
    right = {"F": l2_norm(grid, F), "F_u_v": l2_norm(grid, J @ vf)}
    norm_g = l2_norm(grid, spec.family.g(s))
    norm_v = l2_norm(grid, v)
    asym = abs(lam) * l2_norm(grid, (Gp - Gp.T) @ vf)
    gtv = l2_norm(grid, Gp.T @ vf)
    ad = abs(den)
    bounds = {
        "F": ad * left["grad_v"] + left["lambda_gap"] * norm_g,
        "lambda_gap": right["F"] * norm_v / ad,
        "grad_v": (right["F"] + left["lambda_gap"] * norm_g) / ad,
        "F_u_v": ad * left["grad_u"] + left["lambda_gap"] * gtv + asym,
        "grad_u": (right["F_u_v"] + left["lambda_gap"] * gtv + asym) / ad,
    }
    observed = {**left, **right}
    slack = rtol * (1.0 + max(bounds.values()))
    holds = all(observed[k] <= b * (1 + rtol) + slack for k, b in bounds.items())
    return EquivalenceReport(left, right, bounds, max(left.values()), max(right.values()), asym, holds)
