"""Bulk-synchronous distributed training engine.

Two methods over the same node/backend machinery:

  * run_fadl: per outer iteration, (1) broadcast w and reduce the full
    gradient (margins cached node-side as a by-product), (2) stop when
    ||g|| <= eps_g ||g0||, (3) every node minimizes its local surrogate for
    a fixed budget starting at w, (4) the coordinator takes a convex
    combination of the node steps, (5) broadcast the direction, cache
    direction margins, (6) pick a step by Armijo-Wolfe on the cached
    margins (each probe is one scalar reduction), (7) w += t d.
    Exactly two m-length vector reductions per iteration: the gradient and
    the direction aggregation.

  * run_sqm: distributed trust-region Newton on the global objective; every
    CG iteration triggers one m-length Hessian-product reduction and every
    outer step one gradient reduction.

All reductions happen coordinator-side in fixed node order, so results are
bit-identical across backends and repeated runs.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .approx import ApproxFamily, DegenerateShardError, LocalApproximation
from .backends import make_backend
from .comm_cost import CommLedger
from .data_io import MetricsRecord, PartitionPlan, PartitionScheme, partition
from .linesearch import (
    LineSearchConfig,
    LineSearchError,
    ray_regularizer_terms,
    search_along_ray,
)
from .local_opt import InnerConfig, TrustRegionNewton, angle_check, cos_angle, minimize_inner
from .losses import (
    curvature_bound,
    loss_derivative,
    loss_second_derivative,
    loss_value,
)
from .objective import Objective

__all__ = [
    "Method",
    "StagnationError",
    "NodeState",
    "RunConfig",
    "RunResult",
    "combine_directions",
    "warm_start_average",
    "run",
    "run_fadl",
    "run_sqm",
    "solve_reference",
]


class Method(enum.Enum):
    FADL = "fadl"
    SQM = "sqm"


class StagnationError(RuntimeError):
    """No descent direction or no acceptable step could be produced."""


# -- node state ----------------------------------------------------------------


class NodeState:
    """One node's shard plus the caches the protocol relies on.

    Margins at the current iterate are a by-product of the gradient
    reduction; direction margins are cached when the direction is
    broadcast.  Only the owning worker touches this object.
    """

    def __init__(self, node_id, matrix, labels, loss, lam, node_count, svrg_seed=0):
        self.node_id = node_id
        self.matrix = matrix
        self.matrix_t = matrix.T.tocsr()
        self.labels = labels
        self.loss = loss
        self.lam = lam
        self.node_count = node_count
        self.svrg_seed = svrg_seed
        self.margins = None
        self.dir_margins = None
        self.curvature = None

    @property
    def n_local(self) -> int:
        return self.matrix.shape[0]

    # one message: loss-gradient part, loss sum (rides with the reduction)
    def reduce_gradient(self, w):
        self.margins = self.matrix @ w
        lp = loss_derivative(self.loss, self.margins, self.labels)
        self.curvature = None
        loss_sum = float(np.sum(loss_value(self.loss, self.margins, self.labels)))
        return self.matrix_t @ lp, loss_sum

    def loss_at(self, x):
        z = self.matrix @ x
        return float(np.sum(loss_value(self.loss, z, self.labels)))

    def loss_hessian_product(self, v):
        if self.curvature is None:
            self.curvature = loss_second_derivative(self.loss, self.margins, self.labels)
        return self.matrix_t @ (self.curvature * (self.matrix @ v))

    def minimize_surrogate(self, family, anchor_w, anchor_g, inner: InnerConfig):
        """Build the local surrogate at (w, g) and run the inner budget.

        Empty shards contribute a zero step.  Returns
        (step, iterations, surrogate value drop).
        """
        try:
            approx = LocalApproximation(
                family=family,
                loss=self.loss,
                lam=self.lam,
                matrix=self.matrix,
                labels=self.labels,
                anchor_w=anchor_w,
                anchor_g=anchor_g,
                node_count=self.node_count,
                anchor_margins=self.margins,
            )
        except DegenerateShardError:
            return np.zeros_like(anchor_w), 0, 0.0
        cfg = replace(inner, seed=self.svrg_seed)
        result = minimize_inner(approx, cfg)
        return result.w - anchor_w, result.iterations, result.value_drop

    def set_direction(self, d):
        self.dir_margins = self.matrix @ d
        return None

    def probe(self, t):
        zt = self.margins + t * self.dir_margins
        val = float(np.sum(loss_value(self.loss, zt, self.labels)))
        der = float(
            np.dot(loss_derivative(self.loss, zt, self.labels), self.dir_margins)
        )
        return val, der

    def local_sgd(self, lam_share, epochs, seed):
        """Decaying-step SGD on lam_share-regularized local loss, from zero."""
        m = self.matrix.shape[1]
        w = np.zeros(m)
        n_local = self.n_local
        if n_local == 0 or epochs < 1:
            return w
        rng = np.random.default_rng(seed)
        sq = np.asarray(self.matrix.multiply(self.matrix).sum(axis=1)).ravel()
        comp_l = lam_share + n_local * curvature_bound(self.loss) * float(np.max(sq))
        eta0 = 1.0 / comp_l
        t = 0
        for _ in range(epochs):
            order = rng.permutation(n_local)
            for i in order:
                lo, hi = self.matrix.indptr[i], self.matrix.indptr[i + 1]
                idx = self.matrix.indices[lo:hi]
                vals = self.matrix.data[lo:hi]
                zi = float(np.dot(vals, w[idx]))
                lp = float(loss_derivative(self.loss, zi, self.labels[i]))
                eta = eta0 / (1.0 + lam_share * eta0 * t)
                w *= 1.0 - eta * lam_share
                w[idx] -= eta * (n_local * lp) * vals
                t += 1
        return w


def _build_nodes(objective: Objective, plan: PartitionPlan, seed: int):
    nodes = []
    for p in range(plan.n_nodes):
        shard = plan.shard(p)
        sub = objective.data.rows(shard)
        nodes.append(
            NodeState(
                node_id=p,
                matrix=sub.matrix,
                labels=sub.labels,
                loss=objective.loss,
                lam=objective.lam,
                node_count=plan.n_nodes,
                svrg_seed=seed + p,
            )
        )
    return nodes


# -- coordinator-side pieces -----------------------------------------------------


def combine_directions(gradient, directions, weights=None) -> np.ndarray:
    """Convex combination of node steps, summed in node order.

    Raises StagnationError when the combination fails the descent test
    -g . d > 0.
    """
    n = len(directions)
    if n == 0:
        raise ValueError("no directions to combine")
    if weights is None:
        weights = np.full(n, 1.0 / n)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (n,) or np.any(weights < 0.0):
            raise ValueError("weights must be nonnegative, one per direction")
        total = float(np.sum(weights))
        if total <= 0.0:
            raise ValueError("weights must not all be zero")
        weights = weights / total
    d = np.zeros_like(np.asarray(directions[0], dtype=np.float64))
    for wgt, step in zip(weights, directions):
        d += wgt * np.asarray(step, dtype=np.float64)
    if not float(-np.dot(gradient, d)) > 0.0:
        raise StagnationError("combined direction is not a descent direction")
    return d


def warm_start_average(
    objective: Objective, plan: PartitionPlan, epochs: int = 5, seed: int = 0
) -> np.ndarray:
    """Average of independent node-local SGD solutions (lam/P-regularized)."""
    nodes = _build_nodes(objective, plan, seed)
    lam_share = objective.lam / plan.n_nodes
    acc = np.zeros(objective.data.n_features)
    for p, node in enumerate(nodes):
        acc += node.local_sgd(lam_share, epochs, seed + p)
    return acc / plan.n_nodes


# -- run configuration and result -------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    method: Method = Method.FADL
    family: ApproxFamily = ApproxFamily.QUADRATIC
    nodes: int = 1
    eps_g: float = 1e-3
    max_outer: int = 200
    inner: InnerConfig = field(default_factory=InnerConfig)
    linesearch: LineSearchConfig = field(default_factory=LineSearchConfig)
    combine: str = "uniform"  # or "sizes"
    partition_scheme: PartitionScheme = PartitionScheme.ROUND_ROBIN
    seed: int = 0
    backend: str = "sequential"
    max_workers: int | None = None
    warm_start: str = "zero"  # or "average"
    warm_start_epochs: int = 5
    theory_mode: bool = False
    gamma: float = 100.0
    gradient_data_passes: int = 2
    run_id: str = "run"
    f_star: float | None = None

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError("nodes must be >= 1")
        if self.eps_g < 0:
            raise ValueError("eps_g must be >= 0")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.combine not in ("uniform", "sizes"):
            raise ValueError("combine must be 'uniform' or 'sizes'")
        if self.warm_start not in ("zero", "average"):
            raise ValueError("warm_start must be 'zero' or 'average'")
        if self.gradient_data_passes < 1:
            raise ValueError("gradient_data_passes must be >= 1")


@dataclass
class RunResult:
    weights: np.ndarray
    records: list
    ledger: CommLedger
    status: str  # "converged", "max_outer" or "stagnation"
    step_sizes: list
    plan: PartitionPlan

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_f(self) -> float:
        return self.records[-1].f if self.records else math.nan


def _rel_gap(f, f_star):
    if f_star is None:
        return None
    return (f - f_star) / max(abs(f_star), 1e-300)


class _CostMeter:
    """Event-accumulated model units (see comm_cost for the closed formula)."""

    def __init__(self, nz, n_features, nodes, gamma, c2, grad_passes):
        self.units = 0.0
        self.shard_nz = nz / max(1, nodes)
        self.m = n_features
        self.gamma = gamma
        self.c2 = c2
        self.grad_passes = grad_passes

    def gradient_reduction(self):
        self.units += self.grad_passes * self.shard_nz + self.c2 * self.m + self.gamma * self.m

    def vector_reduction(self):
        self.units += self.gamma * self.m

    def inner_iterations(self, count):
        self.units += count * (2.0 * self.shard_nz + self.c2 * self.m)

    def data_pass(self):
        self.units += self.shard_nz


def _initial_weights(objective, config, plan):
    if config.warm_start == "average":
        return warm_start_average(
            objective, plan, epochs=config.warm_start_epochs, seed=config.seed
        )
    return np.zeros(objective.data.n_features)


# -- FADL ---------------------------------------------------------------------


def run_fadl(objective: Objective, config: RunConfig, backend=None) -> RunResult:
    plan = partition(
        objective.data.n_examples, config.nodes, config.partition_scheme, config.seed
    )
    nodes = _build_nodes(objective, plan, config.seed)
    own_backend = backend is None
    if own_backend:
        backend = make_backend(config.backend, nodes, config.max_workers)
    ledger = CommLedger(n_features=objective.data.n_features)
    meter = _CostMeter(
        objective.data.nnz,
        objective.data.n_features,
        config.nodes,
        config.gamma,
        c2=6.0,
        grad_passes=config.gradient_data_passes,
    )
    if config.combine == "sizes":
        weights = plan.sizes.astype(np.float64) / max(1, plan.n_examples)
    else:
        weights = None

    theta = None
    if config.theory_mode:
        lip = objective.estimate_lipschitz()
        theta = 0.5 * (math.acos(min(1.0, objective.lam / lip)) + 0.5 * math.pi)

    records = []
    step_sizes = []
    started = time.perf_counter()
    w = _initial_weights(objective, config, plan)
    if config.warm_start == "average":
        ledger.vector_reductions += 1  # averaging the node solutions
        ledger.vector_broadcasts += 1
        meter.vector_reduction()

    status = "max_outer"
    g0_norm = None
    reg_half = 0.5 * objective.lam

    try:
        for r in range(config.max_outer):
            ledger.vector_broadcasts += 1
            parts = backend.map(lambda node: node.reduce_gradient(w))
            ledger.vector_reductions += 1
            meter.gradient_reduction()
            g = objective.lam * w
            f = reg_half * float(np.dot(w, w))
            for grad_part, loss_part in parts:
                g = g + grad_part
                f += loss_part
            g_norm = float(np.linalg.norm(g))
            if g0_norm is None:
                g0_norm = g_norm

            row = dict(
                run_id=config.run_id,
                method=Method.FADL.value,
                family=config.family.value,
                nodes=config.nodes,
                outer_iter=r,
                f=f,
                grad_norm=g_norm,
                rel_gap=_rel_gap(f, config.f_star),
                comm_passes=ledger.comm_passes,
                probes=0,
                inner_iterations=0,
                cos_angle=None,
                elapsed_seconds=time.perf_counter() - started,
                cost_units=meter.units,
            )

            if g_norm <= config.eps_g * g0_norm:
                status = "converged"
                records.append(MetricsRecord(**row))
                break

            dir_parts = backend.map(
                lambda node: node.minimize_surrogate(config.family, w, g, config.inner)
            )
            ledger.vector_reductions += 1
            meter.vector_reduction()
            inner_used = max(it for _, it, _ in dir_parts)
            meter.inner_iterations(inner_used)

            kept = []
            for d_p, _, _ in dir_parts:
                if float(-np.dot(g, d_p)) > 0.0:
                    kept.append(d_p)
                else:
                    kept.append(np.zeros_like(d_p))
            if all(not np.any(step) for step in kept):
                d = -g  # every node failed the descent test: plain gradient step
            else:
                d = combine_directions(g, kept, weights)
            gd = float(np.dot(g, d))
            cosang = cos_angle(g, d)
            if config.theory_mode and not angle_check(g, d, theta):
                raise StagnationError(
                    f"direction outside the angle envelope at iteration {r}"
                )

            backend.map(lambda node: node.set_direction(d))
            ledger.vector_broadcasts += 1
            meter.data_pass()

            w_norm2 = float(np.dot(w, w))
            wd_dot = float(np.dot(w, d))
            d_norm2 = float(np.dot(d, d))

            def phi(t):
                ledger.scalar_reductions += 1
                probe_parts = backend.map(lambda node: node.probe(t))
                val, der = ray_regularizer_terms(
                    objective.lam, w_norm2, wd_dot, d_norm2, t
                )
                for ls, lds in probe_parts:
                    val += ls
                    der += lds
                return val, der

            try:
                found = search_along_ray(phi, f, gd, config.linesearch)
            except LineSearchError as exc:
                raise StagnationError(str(exc)) from exc

            w = w + found.t * d
            step_sizes.append(found.t)
            row.update(
                probes=found.probes,
                inner_iterations=inner_used,
                cos_angle=cosang,
                elapsed_seconds=time.perf_counter() - started,
                cost_units=meter.units,
            )
            records.append(MetricsRecord(**row))
    except StagnationError:
        status = "stagnation"
    finally:
        if own_backend:
            backend.close()

    return RunResult(
        weights=w,
        records=records,
        ledger=ledger,
        status=status,
        step_sizes=step_sizes,
        plan=plan,
    )


# -- SQM ------------------------------------------------------------------------


class _DistributedObjective:
    """Coordinator-side view of f through backend reductions."""

    def __init__(self, objective, backend, ledger, meter):
        self.lam = objective.lam
        self.backend = backend
        self.ledger = ledger
        self.meter = meter

    def value(self, x):
        self.ledger.scalar_reductions += 1
        self.meter.data_pass()
        parts = self.backend.map(lambda node: node.loss_at(x))
        total = 0.5 * self.lam * float(np.dot(x, x))
        for p in parts:
            total += p
        return total

    def gradient(self, x):
        self.ledger.vector_broadcasts += 1
        self.ledger.vector_reductions += 1
        self.meter.gradient_reduction()
        parts = self.backend.map(lambda node: node.reduce_gradient(x))
        g = self.lam * x
        for grad_part, _ in parts:
            g = g + grad_part
        return g

    def hessian_operator(self, x):
        def hvp(v):
            self.ledger.vector_broadcasts += 1
            self.ledger.vector_reductions += 1
            self.meter.vector_reduction()
            self.meter.inner_iterations(1)
            parts = self.backend.map(lambda node: node.loss_hessian_product(v))
            out = self.lam * v
            for p in parts:
                out = out + p
            return out

        return hvp


def run_sqm(objective: Objective, config: RunConfig, backend=None) -> RunResult:
    plan = partition(
        objective.data.n_examples, config.nodes, config.partition_scheme, config.seed
    )
    nodes = _build_nodes(objective, plan, config.seed)
    own_backend = backend is None
    if own_backend:
        backend = make_backend(config.backend, nodes, config.max_workers)
    ledger = CommLedger(n_features=objective.data.n_features)
    meter = _CostMeter(
        objective.data.nnz,
        objective.data.n_features,
        config.nodes,
        config.gamma,
        c2=7.0,
        grad_passes=config.gradient_data_passes,
    )
    records = []
    started = time.perf_counter()
    w0 = _initial_weights(objective, config, plan)
    if config.warm_start == "average":
        ledger.vector_reductions += 1
        ledger.vector_broadcasts += 1
        meter.vector_reduction()

    dist = _DistributedObjective(objective, backend, ledger, meter)
    opt = TrustRegionNewton(
        dist.value,
        dist.gradient,
        dist.hessian_operator,
        w0,
        cg_tol=config.inner.cg_tol,
        cg_max=config.inner.cg_max,
    )
    g0_norm = opt.grad_norm
    status = "max_outer"
    try:
        for r in range(config.max_outer):
            row = dict(
                run_id=config.run_id,
                method=Method.SQM.value,
                family=None,
                nodes=config.nodes,
                outer_iter=r,
                f=opt.value,
                grad_norm=opt.grad_norm,
                rel_gap=_rel_gap(opt.value, config.f_star),
                comm_passes=ledger.comm_passes,
                probes=0,
                inner_iterations=0,
                cos_angle=None,
                elapsed_seconds=time.perf_counter() - started,
                cost_units=meter.units,
            )
            if opt.grad_norm <= config.eps_g * g0_norm:
                status = "converged"
                records.append(MetricsRecord(**row))
                break
            info = opt.step()
            if info["stationary"]:
                status = "converged"
                records.append(MetricsRecord(**row))
                break
            if opt.radius < 1e-300:
                raise StagnationError("trust region collapsed")
            row.update(
                inner_iterations=info["cg_iters"],
                elapsed_seconds=time.perf_counter() - started,
                cost_units=meter.units,
            )
            # Log iterates, not trial points: a rejected trust-region step
            # leaves the iterate (and f) unchanged, so it produces no row.
            if info["accepted"]:
                records.append(MetricsRecord(**row))
    except StagnationError:
        status = "stagnation"
    finally:
        if own_backend:
            backend.close()

    return RunResult(
        weights=opt.x,
        records=records,
        ledger=ledger,
        status=status,
        step_sizes=[],
        plan=plan,
    )


def run(objective: Objective, config: RunConfig, backend=None) -> RunResult:
    if config.method is Method.FADL:
        return run_fadl(objective, config, backend)
    if config.method is Method.SQM:
        return run_sqm(objective, config, backend)
    raise ValueError(f"unknown method: {config.method!r}")


def solve_reference(
    objective: Objective, tol: float = 1e-10, max_iter: int = 2000
) -> tuple[np.ndarray, float]:
    """Over-long single-process trust-region solve, for gap baselines."""
    mat = objective.data.matrix
    mat_t = objective.data.matrix_t

    def hess_op(x):
        lpp = objective.loss_curvature(objective.margins(x))

        def hvp(v):
            return objective.lam * v + mat_t @ (lpp * (mat @ v))

        return hvp

    opt = TrustRegionNewton(
        objective.value,
        objective.gradient,
        hess_op,
        np.zeros(objective.data.n_features),
        cg_tol=0.05,
        cg_max=200,
    )
    g0 = opt.grad_norm
    if g0 == 0.0:
        return opt.x, opt.value
    for _ in range(max_iter):
        if opt.grad_norm <= tol * g0:
            break
        info = opt.step()
        if info["stationary"]:
            break
    return opt.x, opt.value
