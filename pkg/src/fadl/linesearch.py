"""Armijo-Wolfe step size selection along a fixed descent ray.

The objective restricted to w + t d is

    phi(t) = lam/2 (w2 + 2 t wd + t^2 d2) + sum_i l(z_i + t e_i, y_i)

with z = X w and e = X d cached, so every probe costs O(n) scalar work and,
in the distributed engine, a single scalar reduction.  For strongly convex
phi and 0 < alpha < beta < 1 the set of accepted steps is a closed interval
[t_beta, t_alpha] with positive width, where t_beta solves
phi'(t) = beta phi'(0) and t_alpha solves phi(t) = phi(0) + alpha t phi'(0).
The search brackets that interval with geometric expansion and shrinkage,
lands inside it by bisection, then spends a few extra probes moving toward
the ray minimizer (secant steps on phi', safeguarded by bisection), never
leaving the accepted interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import loss_derivative, loss_value
from .objective import Objective

__all__ = [
    "LineSearchConfig",
    "LineSearchError",
    "LineSearchResult",
    "RestrictedObjective",
    "ray_regularizer_terms",
    "armijo_wolfe_search",
    "search_along_ray",
    "linear_rate_bound",
]


class LineSearchError(RuntimeError):
    """Raised when no acceptable step is found within the probe budget."""


@dataclass(frozen=True)
class LineSearchConfig:
    alpha: float = 1e-4
    beta: float = 0.9
    t_init: float = 1.0
    expand: float = 2.0
    shrink: float = 0.5
    max_brackets: int = 50
    max_probes: int = 80
    refine_steps: int = 6

    def __post_init__(self):
        if not (0.0 < self.alpha < self.beta < 1.0):
            raise ValueError("need 0 < alpha < beta < 1")
        if self.t_init <= 0.0:
            raise ValueError("t_init must be positive")
        if self.expand <= 1.0:
            raise ValueError("expand must exceed 1")
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink must lie in (0, 1)")
        if self.max_brackets < 1 or self.max_probes < 1:
            raise ValueError("probe budgets must be >= 1")


@dataclass(frozen=True)
class LineSearchResult:
    t: float
    value: float
    derivative: float
    probes: int


def ray_regularizer_terms(
    lam: float, w_norm2: float, wd_dot: float, d_norm2: float, t: float
):
    """Value and t-derivative of lam/2 ||w + t d||^2 from three scalars."""
    val = 0.5 * lam * (w_norm2 + 2.0 * t * wd_dot + t * t * d_norm2)
    der = lam * (wd_dot + t * d_norm2)
    return val, der


class RestrictedObjective:
    """Single-process restriction of an objective to a ray, margin-cached."""

    def __init__(self, objective: Objective, w: np.ndarray, d: np.ndarray):
        w = np.asarray(w, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        self.loss = objective.loss
        self.lam = objective.lam
        self.labels = objective.data.labels
        self.base_margins = objective.margins(w)
        self.dir_margins = objective.margins(d)
        self.w_norm2 = float(np.dot(w, w))
        self.wd_dot = float(np.dot(w, d))
        self.d_norm2 = float(np.dot(d, d))

    def phi(self, t: float):
        """(phi(t), phi'(t))."""
        zt = self.base_margins + t * self.dir_margins
        val, der = ray_regularizer_terms(
            self.lam, self.w_norm2, self.wd_dot, self.d_norm2, t
        )
        val += float(np.sum(loss_value(self.loss, zt, self.labels)))
        der += float(
            np.dot(loss_derivative(self.loss, zt, self.labels), self.dir_margins)
        )
        return val, der


def search_along_ray(
    phi, f0: float, g_dot_d: float, config: LineSearchConfig = LineSearchConfig()
) -> LineSearchResult:
    """Find t with phi(t) <= f0 + alpha t g.d and phi'(t) >= beta g.d.

    phi is a callable t -> (value, derivative).  g_dot_d must be the
    directional derivative at t = 0 and must be negative.
    """
    if not np.isfinite(g_dot_d) or g_dot_d >= 0.0:
        raise ValueError(f"not a descent direction: g.d = {g_dot_d}")
    alpha, beta = config.alpha, config.beta
    probes = 0

    def evaluate(t):
        nonlocal probes
        probes += 1
        if probes > config.max_probes:
            raise LineSearchError(f"probe budget {config.max_probes} exhausted")
        return phi(t)

    def armijo_ok(t, val):
        return np.isfinite(val) and val <= f0 + alpha * t * g_dot_d

    def wolfe_ok(der):
        return np.isfinite(der) and der >= beta * g_dot_d

    # Bracket the accepted interval: lo is the largest step known to fail
    # the curvature condition (starting from t = 0), hi the smallest known
    # to fail sufficient decrease.
    lo = 0.0
    hi = None
    t = config.t_init
    val, der = evaluate(t)
    steps = 0
    while not (armijo_ok(t, val) and wolfe_ok(der)):
        steps += 1
        if steps > config.max_brackets:
            raise LineSearchError(
                f"no accepted step after {config.max_brackets} bracketing steps"
            )
        if not armijo_ok(t, val):
            hi = t
            t = lo + 0.5 * (hi - lo) if lo > 0.0 else t * config.shrink
        else:
            lo = t
            t = t * config.expand if hi is None else lo + 0.5 * (hi - lo)
        val, der = evaluate(t)

    # Refinement: walk toward the ray minimizer without leaving the
    # accepted interval.  left/right bracket the sign change of phi'.
    best = (t, val, der)
    left = (0.0, f0, g_dot_d)
    right = None
    if der >= 0.0:
        right = (t, val, der)
    else:
        left = (t, val, der)
    deriv_tol = 1e-12 * abs(g_dot_d)
    for _ in range(config.refine_steps):
        if probes >= config.max_probes:
            break
        if abs(best[2]) <= deriv_tol:
            break
        if right is not None:
            tl, _, dl = left
            tr, _, dr = right
            if dr <= dl:
                break
            cand = tl - dl * (tr - tl) / (dr - dl)
            mid_lo = tl + 0.25 * (tr - tl)
            mid_hi = tl + 0.75 * (tr - tl)
            if not (mid_lo <= cand <= mid_hi):
                cand = tl + 0.5 * (tr - tl)
        else:
            cand = best[0] * config.expand
            if hi is not None:
                cand = min(cand, best[0] + 0.5 * (hi - best[0]))
        if cand <= 0.0 or not np.isfinite(cand):
            break
        cval, cder = evaluate(cand)
        if cder >= 0.0:
            right = (cand, cval, cder)
        else:
            left = (cand, cval, cder)
        if armijo_ok(cand, cval) and wolfe_ok(cder) and cval <= best[1]:
            best = (cand, cval, cder)

    t, val, der = best
    return LineSearchResult(t=t, value=val, derivative=der, probes=probes)


def armijo_wolfe_search(
    restricted, g_dot_d: float, config: LineSearchConfig = LineSearchConfig()
) -> LineSearchResult:
    """Search on a RestrictedObjective (or any object with .phi)."""
    phi = restricted.phi if hasattr(restricted, "phi") else restricted
    f0, _ = phi(0.0)
    return search_along_ray(phi, f0, g_dot_d, config)


def linear_rate_bound(
    alpha: float, beta: float, sigma: float, lipschitz: float, cos_theta: float
) -> float:
    """Worst-case per-iteration contraction of the optimality gap.

    For sigma-strongly convex f with L-Lipschitz gradient, Armijo-Wolfe
    steps along directions within angle theta of the negative gradient
    contract f - f_star by at least
        1 - 2 alpha (1 - beta) (sigma/L)^2 cos^2(theta)
    per iteration.  The returned value is clamped into (0, 1).
    """
    if not (0.0 < alpha < beta < 1.0):
        raise ValueError("need 0 < alpha < beta < 1")
    if not (0.0 < sigma <= lipschitz):
        raise ValueError("need 0 < sigma <= lipschitz")
    if not (0.0 <= cos_theta <= 1.0):
        raise ValueError("cos_theta must lie in [0, 1]")
    rate = 1.0 - 2.0 * alpha * (1.0 - beta) * (sigma / lipschitz) ** 2 * cos_theta**2
    tiny = 1e-16
    return float(min(max(rate, tiny), 1.0 - tiny))
