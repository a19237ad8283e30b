"""Node-local approximations of the global objective.

At an outer iterate w_r with full gradient g_r, every node builds a convex
surrogate fhat of the global objective using only its own shard plus the
two broadcast m-vectors (w_r, g_r).  All four families share three
structural properties the rest of the method relies on:

  * gradient consistency: grad fhat(w_r) == g_r exactly in exact
    arithmetic (a linear correction term enforces it);
  * lam-strong convexity, inherited from the regularizer;
  * Lipschitz-continuous gradients, with a shard-computable bound.

Families (d = w - w_r, H_p(w) the shard loss Hessian, H_p^r the same at
the anchor, P the node count, gL the loss part of the gradient):

  LINEAR     reg(w) + L_p(w) + (gL(w_r) - gL_p(w_r)) . d
  HYBRID     LINEAR + (P-1)/2 d^T H_p^r d
  QUADRATIC  reg(w) + gL(w_r) . d + P/2 d^T H_p^r d
  NONLINEAR  reg(w) + P L_p(w) + (gL(w_r) - P gL_p(w_r)) . d

Values are reported up to the family's additive constant (value
differences are the meaningful quantity for the inner optimizer).
"""

from __future__ import annotations

import enum
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .losses import (
    LossKind,
    curvature_bound,
    loss_derivative,
    loss_second_derivative,
    loss_value,
)
from .objective import Objective, spectral_norm_estimate

__all__ = [
    "ApproxFamily",
    "DegenerateShardError",
    "UnsupportedFamilyError",
    "LocalApproximation",
    "build_approx",
    "psi_gradient",
    "svrg_gradient_sample",
]


class ApproxFamily(enum.Enum):
    LINEAR = "linear"
    HYBRID = "hybrid"
    QUADRATIC = "quadratic"
    NONLINEAR = "nonlinear"


class DegenerateShardError(ValueError):
    """Raised when a node has no examples to approximate with."""


class UnsupportedFamilyError(ValueError):
    """Raised for operations defined only for a subset of the families."""


class LocalApproximation:
    """One node's surrogate objective, bound to a fixed anchor (w_r, g_r)."""

    def __init__(
        self,
        family: ApproxFamily,
        loss: LossKind,
        lam: float,
        matrix: sp.csr_matrix,
        labels: np.ndarray,
        anchor_w: np.ndarray,
        anchor_g: np.ndarray,
        node_count: int,
        anchor_margins: np.ndarray | None = None,
    ):
        if matrix.shape[0] == 0:
            raise DegenerateShardError("empty shard has no local approximation")
        if node_count < 1:
            raise ValueError("node_count must be >= 1")
        self.family = family
        self.loss = loss
        self.lam = float(lam)
        self.matrix = matrix
        self.matrix_t = matrix.T.tocsr()
        self.labels = np.asarray(labels, dtype=np.float64)
        self.anchor_w = np.asarray(anchor_w, dtype=np.float64)
        self.anchor_g = np.asarray(anchor_g, dtype=np.float64)
        self.node_count = int(node_count)

        if anchor_margins is None:
            anchor_margins = self.matrix @ self.anchor_w
        self.anchor_margins = np.asarray(anchor_margins, dtype=np.float64)

        # Shard quantities at the anchor.
        self._anchor_lp = loss_derivative(self.loss, self.anchor_margins, self.labels)
        self._anchor_lpp = loss_second_derivative(
            self.loss, self.anchor_margins, self.labels
        )
        self._local_loss_grad = self.matrix_t @ self._anchor_lp
        # Loss part of the full gradient, recovered from the broadcast g_r.
        self._full_loss_grad = self.anchor_g - self.lam * self.anchor_w

        p = float(self.node_count)
        if family in (ApproxFamily.LINEAR, ApproxFamily.HYBRID):
            self._correction = self._full_loss_grad - self._local_loss_grad
        elif family is ApproxFamily.NONLINEAR:
            self._correction = self._full_loss_grad - p * self._local_loss_grad
        elif family is ApproxFamily.QUADRATIC:
            self._correction = self._full_loss_grad
        else:
            raise ValueError(f"unknown family: {family!r}")

    # -- shard primitives --------------------------------------------------

    @property
    def n_local(self) -> int:
        return self.matrix.shape[0]

    def _local_margins(self, w: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(w, dtype=np.float64)

    def _anchor_hessian_vector(self, v: np.ndarray) -> np.ndarray:
        return self.matrix_t @ (self._anchor_lpp * (self.matrix @ v))

    # -- surrogate value / gradient / curvature ----------------------------

    def value(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=np.float64)
        d = w - self.anchor_w
        reg = 0.5 * self.lam * float(np.dot(w, w))
        p = float(self.node_count)
        fam = self.family
        if fam is ApproxFamily.QUADRATIC:
            hd = self._anchor_hessian_vector(d)
            return (
                reg
                + float(np.dot(self._correction, d))
                + 0.5 * p * float(np.dot(d, hd))
            )
        local = float(np.sum(loss_value(self.loss, self._local_margins(w), self.labels)))
        lin = float(np.dot(self._correction, d))
        if fam is ApproxFamily.LINEAR:
            return reg + local + lin
        if fam is ApproxFamily.HYBRID:
            hd = self._anchor_hessian_vector(d)
            return reg + local + lin + 0.5 * (p - 1.0) * float(np.dot(d, hd))
        if fam is ApproxFamily.NONLINEAR:
            return reg + p * local + lin
        raise ValueError(f"unknown family: {fam!r}")

    def gradient(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        d = w - self.anchor_w
        p = float(self.node_count)
        fam = self.family
        if fam is ApproxFamily.QUADRATIC:
            return (
                self.lam * w
                + self._correction
                + p * self._anchor_hessian_vector(d)
            )
        lp = loss_derivative(self.loss, self._local_margins(w), self.labels)
        local_grad = self.matrix_t @ lp
        if fam is ApproxFamily.LINEAR:
            return self.lam * w + local_grad + self._correction
        if fam is ApproxFamily.HYBRID:
            return (
                self.lam * w
                + local_grad
                + self._correction
                + (p - 1.0) * self._anchor_hessian_vector(d)
            )
        if fam is ApproxFamily.NONLINEAR:
            return self.lam * w + p * local_grad + self._correction
        raise ValueError(f"unknown family: {fam!r}")

    def hessian_operator(self, w: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """Hessian-vector product closure with curvature frozen at w.

        The trust-region solver calls this once per iterate and applies it
        many times inside CG, so the margin-dependent curvature weights are
        computed here, not per product.
        """
        p = float(self.node_count)
        fam = self.family
        if fam is ApproxFamily.QUADRATIC:
            def hvp_quadratic(v: np.ndarray) -> np.ndarray:
                return self.lam * v + p * self._anchor_hessian_vector(v)

            return hvp_quadratic

        lpp = loss_second_derivative(self.loss, self._local_margins(w), self.labels)

        if fam is ApproxFamily.LINEAR:
            def hvp_linear(v: np.ndarray) -> np.ndarray:
                return self.lam * v + self.matrix_t @ (lpp * (self.matrix @ v))

            return hvp_linear
        if fam is ApproxFamily.HYBRID:
            def hvp_hybrid(v: np.ndarray) -> np.ndarray:
                return (
                    self.lam * v
                    + self.matrix_t @ (lpp * (self.matrix @ v))
                    + (p - 1.0) * self._anchor_hessian_vector(v)
                )

            return hvp_hybrid
        if fam is ApproxFamily.NONLINEAR:
            def hvp_nonlinear(v: np.ndarray) -> np.ndarray:
                return self.lam * v + p * (self.matrix_t @ (lpp * (self.matrix @ v)))

            return hvp_nonlinear
        raise ValueError(f"unknown family: {fam!r}")

    # -- conditioning -------------------------------------------------------

    @property
    def strong_convexity(self) -> float:
        return self.lam

    def lipschitz_bound(self, iters: int = 40, seed: int = 0) -> float:
        """Shard-computable bound on the surrogate's gradient Lipschitz constant.

        The loss curvature of LINEAR is at most the shard's; the other three
        families scale shard curvature by up to P.
        """
        top = spectral_norm_estimate(self.matrix, iters=iters, seed=seed)
        mult = 1.0 if self.family is ApproxFamily.LINEAR else float(self.node_count)
        return self.lam + 1.1 * curvature_bound(self.loss) * mult * top


def build_approx(
    family: ApproxFamily,
    objective: Objective,
    shard,
    anchor_w: np.ndarray,
    anchor_g: np.ndarray,
    node_count: int,
) -> LocalApproximation:
    """Build a node's surrogate from a row-index shard of the objective's data."""
    shard = np.asarray(shard, dtype=np.int64)
    if shard.size == 0:
        raise DegenerateShardError("empty shard has no local approximation")
    sub = objective.data.rows(shard)
    return LocalApproximation(
        family=family,
        loss=objective.loss,
        lam=objective.lam,
        matrix=sub.matrix,
        labels=sub.labels,
        anchor_w=anchor_w,
        anchor_g=anchor_g,
        node_count=node_count,
    )


# -- stochastic view of the LINEAR family -----------------------------------
#
# The LINEAR surrogate decomposes as (1/n_p) sum_i psihat_i with
# psihat_i(w) = psi_i(w) + n_p corr . (w - w_r) and
# psi_i(w) = n_p l(w . x_i, y_i) + lam/2 ||w||^2.  In the variance-reduced
# difference the correction cancels, so plain SGD on the samples below is
# exactly the classic snapshot-based variance-reduced update.


def _row(matrix: sp.csr_matrix, i: int):
    lo, hi = matrix.indptr[i], matrix.indptr[i + 1]
    return matrix.indices[lo:hi], matrix.data[lo:hi]


def psi_gradient(approx: LocalApproximation, w: np.ndarray, i: int) -> np.ndarray:
    """Gradient of the i-th sample function n_p l(w . x_i, y_i) + reg(w)."""
    if approx.family is not ApproxFamily.LINEAR:
        raise UnsupportedFamilyError(
            "the stochastic decomposition is defined for the LINEAR family"
        )
    w = np.asarray(w, dtype=np.float64)
    idx, vals = _row(approx.matrix, i)
    zi = float(np.dot(vals, w[idx]))
    lp = float(loss_derivative(approx.loss, zi, approx.labels[i]))
    out = approx.lam * w
    out[idx] += (approx.n_local * lp) * vals
    return out


def svrg_gradient_sample(
    approx: LocalApproximation, w: np.ndarray, i: int
) -> np.ndarray:
    """Variance-reduced stochastic gradient of the LINEAR surrogate.

    Equals grad psi_i(w) - grad psi_i(w_r) + g_r; averaging over the shard
    recovers grad fhat(w) exactly in exact arithmetic.
    """
    return (
        psi_gradient(approx, w, i)
        - psi_gradient(approx, approx.anchor_w, i)
        + approx.anchor_g
    )
