"""Inner solvers for the node-local surrogates, plus angle diagnostics.

Each node runs a fixed budget of iterations of one monotone-or-stochastic
method on its surrogate, starting from the anchor w_r.  The budget that
theory asks for is computable from four scalars and is exposed here as
``sufficient_inner_budget``: if the inner method contracts the surrogate
gap by a factor delta per iteration, then after

    ceil( log(L / (sigma (1 - zeta^2))) / log(1/delta) )

iterations the step v^k - w_r points within acos(zeta) of the direction to
the exact surrogate minimizer, which combined with the minimizer's own
angle guarantee keeps v^k - w_r a descent direction for the global
objective.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .approx import ApproxFamily, LocalApproximation, UnsupportedFamilyError, psi_gradient

__all__ = [
    "InnerMethod",
    "InnerConfig",
    "InnerResult",
    "TrustRegionNewton",
    "steihaug_cg",
    "minimize_inner",
    "sufficient_inner_budget",
    "angle_check",
    "cos_angle",
]


class InnerMethod(enum.Enum):
    TRON = "tron"
    LBFGS = "lbfgs"
    SVRG = "svrg"


@dataclass(frozen=True)
class InnerConfig:
    method: InnerMethod = InnerMethod.TRON
    budget: int = 10
    cg_tol: float = 0.1
    cg_max: int = 25
    lbfgs_memory: int = 10
    lbfgs_backtracks: int = 30
    svrg_epoch_len: int | None = None
    svrg_step: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not (0.0 < self.cg_tol < 1.0):
            raise ValueError("cg_tol must lie in (0, 1)")
        if self.cg_max < 1:
            raise ValueError("cg_max must be >= 1")
        if self.lbfgs_memory < 1:
            raise ValueError("lbfgs_memory must be >= 1")


@dataclass
class InnerResult:
    w: np.ndarray
    iterations: int
    value_drop: float
    trace: list = field(default_factory=list)


# -- trust-region Newton ------------------------------------------------------


def steihaug_cg(grad, hvp, radius, tol, maxiter):
    """CG on the local quadratic model, truncated at the trust boundary.

    Returns (step, predicted_decrease, cg_iterations, hit_boundary).  The
    predicted decrease is accumulated from CG invariants (0.5 alpha r.r per
    interior step) so no extra Hessian product is spent on it.
    """
    m = grad.shape[0]
    s = np.zeros(m)
    r = grad.copy()
    rr = float(np.dot(r, r))
    g_norm = math.sqrt(rr)
    if g_norm == 0.0:
        return s, 0.0, 0, False
    stop = tol * g_norm
    d = -r
    pred = 0.0
    iters = 0

    def to_boundary(s, d):
        ss = float(np.dot(s, s))
        sd = float(np.dot(s, d))
        dd = float(np.dot(d, d))
        disc = sd * sd + dd * (radius * radius - ss)
        return (-sd + math.sqrt(max(disc, 0.0))) / dd

    for _ in range(maxiter):
        bd = hvp(d)
        dbd = float(np.dot(d, bd))
        iters += 1
        if dbd <= 0.0:
            tau = to_boundary(s, d)
            s += tau * d
            pred += tau * rr - 0.5 * tau * tau * dbd
            return s, pred, iters, True
        alpha = rr / dbd
        s_next = s + alpha * d
        if float(np.dot(s_next, s_next)) >= radius * radius:
            tau = to_boundary(s, d)
            s += tau * d
            pred += tau * rr - 0.5 * tau * tau * dbd
            return s, pred, iters, True
        s = s_next
        pred += 0.5 * alpha * rr
        r = r + alpha * bd
        rr_new = float(np.dot(r, r))
        if math.sqrt(rr_new) <= stop:
            break
        d = -r + (rr_new / rr) * d
        rr = rr_new
    return s, pred, iters, False


class TrustRegionNewton:
    """Stepping trust-region Newton-CG over callable value/grad/Hessian-op.

    Works identically whether the callables are node-local (surrogate
    minimization) or coordinator-side reductions (the distributed
    quadratic-model baseline); radius state persists across step() calls.
    """

    ETA_SHRINK = 0.25
    ETA_GROW = 0.75
    SHRINK = 0.25
    GROW = 2.5

    def __init__(self, value_fn, grad_fn, hess_op_fn, x0, cg_tol=0.1, cg_max=25,
                 radius=None):
        self.value_fn = value_fn
        self.grad_fn = grad_fn
        self.hess_op_fn = hess_op_fn
        self.x = np.asarray(x0, dtype=np.float64).copy()
        self.value = float(value_fn(self.x))
        self.grad = np.asarray(grad_fn(self.x), dtype=np.float64)
        self.grad_norm = float(np.linalg.norm(self.grad))
        self.radius = float(radius) if radius is not None else self.grad_norm
        if self.radius <= 0.0:
            self.radius = 1.0
        self.cg_tol = cg_tol
        self.cg_max = cg_max

    def step(self):
        """One trust-region iteration.  Returns a diagnostics dict."""
        if self.grad_norm == 0.0:
            return {"stationary": True, "accepted": False, "cg_iters": 0}
        hvp = self.hess_op_fn(self.x)
        s, pred, cg_iters, boundary = steihaug_cg(
            self.grad, hvp, self.radius, self.cg_tol, self.cg_max
        )
        trial = self.x + s
        trial_value = float(self.value_fn(trial))
        ared = self.value - trial_value
        rho = ared / pred if pred > 0.0 else -math.inf
        accepted = ared > 0.0
        if accepted:
            self.x = trial
            self.value = trial_value
            self.grad = np.asarray(self.grad_fn(trial), dtype=np.float64)
            self.grad_norm = float(np.linalg.norm(self.grad))
        if rho < self.ETA_SHRINK:
            self.radius *= self.SHRINK
        elif rho > self.ETA_GROW and boundary:
            self.radius *= self.GROW
        return {
            "stationary": False,
            "accepted": accepted,
            "cg_iters": cg_iters,
            "rho": rho,
            "step_norm": float(np.linalg.norm(s)),
            "boundary": boundary,
        }


# -- L-BFGS -------------------------------------------------------------------


def _lbfgs_direction(grad, s_list, y_list):
    q = grad.copy()
    alphas = []
    for s, y in zip(reversed(s_list), reversed(y_list)):
        rho = 1.0 / float(np.dot(s, y))
        a = rho * float(np.dot(s, q))
        alphas.append((a, rho))
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= float(np.dot(s, y)) / float(np.dot(y, y))
    for (a, rho), s, y in zip(reversed(alphas), s_list, y_list):
        b = rho * float(np.dot(y, q))
        q += (a - b) * s
    return -q


def _minimize_lbfgs(approx, config):
    v = approx.anchor_w.copy()
    f = approx.value(v)
    g = approx.gradient(v)
    s_list, y_list = [], []
    iters = 0
    for _ in range(config.budget):
        if float(np.linalg.norm(g)) == 0.0:
            break
        d = _lbfgs_direction(g, s_list, y_list)
        gd = float(np.dot(g, d))
        if gd >= 0.0:
            d = -g
            gd = -float(np.dot(g, g))
        t = 1.0
        accepted = False
        for _ in range(config.lbfgs_backtracks):
            trial = v + t * d
            ft = approx.value(trial)
            if ft <= f + 1e-4 * t * gd:
                accepted = True
                break
            t *= 0.5
        iters += 1
        if not accepted:
            break
        g_new = approx.gradient(trial)
        s, y = trial - v, g_new - g
        if float(np.dot(s, y)) > 0.0:
            s_list.append(s)
            y_list.append(y)
            if len(s_list) > config.lbfgs_memory:
                s_list.pop(0)
                y_list.pop(0)
        v, f, g = trial, ft, g_new
    return v, iters


# -- variance-reduced SGD -----------------------------------------------------


def _svrg_default_step(approx):
    # Per-sample curvature is bounded by lam + n_p * c * max_i ||x_i||^2.
    sq = np.asarray(approx.matrix.multiply(approx.matrix).sum(axis=1)).ravel()
    max_row = float(np.max(sq)) if sq.size else 0.0
    from .losses import curvature_bound

    local_l = approx.lam + approx.n_local * curvature_bound(approx.loss) * max_row
    return 1.0 / (2.0 * local_l)


def _minimize_svrg(approx, config):
    if approx.family is not ApproxFamily.LINEAR:
        raise UnsupportedFamilyError(
            "the stochastic inner method applies to the LINEAR family only"
        )
    rng = np.random.default_rng(config.seed)
    eta = config.svrg_step if config.svrg_step is not None else _svrg_default_step(approx)
    epoch_len = config.svrg_epoch_len or approx.n_local
    v = approx.anchor_w.copy()
    snapshot = approx.anchor_w
    ref_grad = approx.anchor_g
    for _ in range(config.budget):
        for _ in range(epoch_len):
            i = int(rng.integers(approx.n_local))
            sample = (
                psi_gradient(approx, v, i)
                - psi_gradient(approx, snapshot, i)
                + ref_grad
            )
            v = v - eta * sample
        snapshot = v.copy()
        ref_grad = approx.gradient(snapshot)
    return v, config.budget


# -- entry point ---------------------------------------------------------------


def minimize_inner(
    approx: LocalApproximation, config: InnerConfig = InnerConfig(), trace: bool = False
) -> InnerResult:
    """Run the configured method for its budget, starting at the anchor."""
    v0 = approx.anchor_w
    if config.method is InnerMethod.TRON:
        opt = TrustRegionNewton(
            approx.value,
            approx.gradient,
            approx.hessian_operator,
            v0,
            cg_tol=config.cg_tol,
            cg_max=config.cg_max,
            radius=float(np.linalg.norm(approx.anchor_g)),
        )
        start = opt.value
        iters = 0
        iterates = []
        for _ in range(config.budget):
            info = opt.step()
            if info["stationary"]:
                break
            iters += 1
            if trace:
                iterates.append(opt.x.copy())
        return InnerResult(
            w=opt.x, iterations=iters, value_drop=start - opt.value, trace=iterates
        )
    if config.method is InnerMethod.LBFGS:
        start = approx.value(v0)
        v, iters = _minimize_lbfgs(approx, config)
        return InnerResult(w=v, iterations=iters, value_drop=start - approx.value(v))
    if config.method is InnerMethod.SVRG:
        start = approx.value(v0)
        v, iters = _minimize_svrg(approx, config)
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("stochastic inner method diverged")
        return InnerResult(w=v, iterations=iters, value_drop=start - approx.value(v))
    raise ValueError(f"unknown inner method: {config.method!r}")


# -- angle machinery -----------------------------------------------------------


def sufficient_inner_budget(
    sigma: float, lipschitz: float, alignment: float, contraction: float
) -> int:
    """Iterations needed before the inner iterate direction aligns.

    alignment is the required cosine between v^k - w_r and the direction to
    the exact surrogate minimizer; contraction is the inner method's
    per-iteration gap factor.  Clamped below at 1.
    """
    if not (0.0 < sigma <= lipschitz):
        raise ValueError("need 0 < sigma <= lipschitz")
    if not (0.0 < alignment < 1.0):
        raise ValueError("alignment must lie in (0, 1)")
    if not (0.0 < contraction < 1.0):
        raise ValueError("contraction must lie in (0, 1)")
    arg = lipschitz / (sigma * (1.0 - alignment * alignment))
    k = math.log(arg) / math.log(1.0 / contraction)
    return max(1, math.ceil(k))


def cos_angle(gradient, direction) -> float:
    """Cosine of the angle between -gradient and direction."""
    g = np.asarray(gradient, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    gn = float(np.linalg.norm(g))
    dn = float(np.linalg.norm(d))
    if gn == 0.0 or dn == 0.0:
        raise ValueError("angle undefined for zero vectors")
    return float(-np.dot(g, d)) / (gn * dn)


def angle_check(gradient, direction, theta: float) -> bool:
    """True when direction lies within angle theta of -gradient.

    theta must lie in (0, pi/2]; the test is
    -g . d >= cos(theta) ||g|| ||d||.
    """
    if not (0.0 < theta <= math.pi / 2.0):
        raise ValueError("theta must lie in (0, pi/2]")
    return cos_angle(gradient, direction) >= math.cos(theta)
