"""L2-regularized empirical risk for linear classifiers.

    f(w) = lam/2 ||w||^2 + sum_i l(w . x_i, y_i)

The loss part decomposes over any partition of the examples, which is what
the distributed engine exploits: nodes evaluate loss sums, loss gradients
and loss curvature products on their own shard, and the coordinator adds
the regularizer terms once.

Conventions used throughout:
  * value/gradient/hessian_vector with no shard argument refer to the full
    objective including the regularizer;
  * the loss_* variants take a row-index shard and exclude the regularizer,
    so summing them over a partition recovers the full loss part.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import Dataset
from .losses import (
    LossKind,
    curvature_bound,
    loss_derivative,
    loss_second_derivative,
    loss_value,
)

__all__ = ["Objective", "spectral_norm_estimate"]


def spectral_norm_estimate(
    matrix: sp.csr_matrix, iters: int = 40, seed: int = 0
) -> float:
    """Power-iteration estimate of lambda_max(X^T X).

    Returns 0.0 for empty or all-zero matrices.  The estimate is a Rayleigh
    quotient, hence a lower bound on the true value; callers that need an
    upper bound should inflate it (see Objective.estimate_lipschitz).
    """
    n, m = matrix.shape
    if n == 0 or m == 0 or matrix.nnz == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return 0.0
    v /= norm
    matrix_t = matrix.T.tocsr()
    est = 0.0
    for _ in range(max(1, iters)):
        u = matrix @ v
        v = matrix_t @ u
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return 0.0
        v /= norm
        est = float(np.dot(u, u))
    return est


@dataclass
class Objective:
    """Bundle of dataset, loss kind and regularization strength."""

    data: Dataset
    loss: LossKind
    lam: float
    _lipschitz: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam <= 0.0:
            raise ValueError("lam must be a positive finite float")

    # -- margins ---------------------------------------------------------

    def margins(self, w: np.ndarray) -> np.ndarray:
        """z_i = w . x_i for every example."""
        return self.data.matrix @ np.asarray(w, dtype=np.float64)

    # -- value -----------------------------------------------------------

    def value(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=np.float64)
        return self.regularizer(w) + self.loss_sum(self.margins(w))

    def regularizer(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=np.float64)
        return 0.5 * self.lam * float(np.dot(w, w))

    def loss_sum(self, margins: np.ndarray, shard=None) -> float:
        z, y = self._select(margins, shard)
        return float(np.sum(loss_value(self.loss, z, y)))

    # -- first order -----------------------------------------------------

    def gradient(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        return self.lam * w + self.loss_gradient(self.margins(w))

    def loss_gradient(self, margins: np.ndarray, shard=None) -> np.ndarray:
        """sum_{i in shard} l'(z_i, y_i) x_i, without the lam*w term."""
        z, y = self._select(margins, shard)
        lp = loss_derivative(self.loss, z, y)
        if shard is None:
            return self.data.matrix_t @ lp
        full = np.zeros(self.data.n_examples)
        full[shard] = lp
        return self.data.matrix_t @ full

    # -- second order ----------------------------------------------------

    def hessian_vector(self, w: np.ndarray, v: np.ndarray) -> np.ndarray:
        """(lam I + X^T D X) v with D = diag(l''(z_i)) at margins of w."""
        v = np.asarray(v, dtype=np.float64)
        return self.lam * v + self.loss_hessian_vector(self.margins(w), v)

    def loss_hessian_vector(
        self, margins: np.ndarray, v: np.ndarray, shard=None
    ) -> np.ndarray:
        z, y = self._select(margins, shard)
        lpp = loss_second_derivative(self.loss, z, y)
        v = np.asarray(v, dtype=np.float64)
        if shard is None:
            return self.data.matrix_t @ (lpp * (self.data.matrix @ v))
        full = np.zeros(self.data.n_examples)
        full[shard] = lpp * (self.data.matrix[shard] @ v)
        return self.data.matrix_t @ full

    def loss_curvature(self, margins: np.ndarray, shard=None) -> np.ndarray:
        z, y = self._select(margins, shard)
        return loss_second_derivative(self.loss, z, y)

    # -- conditioning ----------------------------------------------------

    @property
    def strong_convexity(self) -> float:
        """The regularizer makes f lam-strongly convex."""
        return self.lam

    def estimate_lipschitz(self, iters: int = 40, seed: int = 0) -> float:
        """Upper estimate of the gradient Lipschitz constant.

        The Hessian satisfies lam I <= H(w) <= (lam + c X^T X) with c the
        loss curvature bound, so L <= lam + c lambda_max(X^T X).  Power
        iteration approaches lambda_max from below; the 1.1 inflation turns
        the estimate into a bound with margin for all practical purposes.
        The result is cached on first call.
        """
        if self._lipschitz is None:
            top = spectral_norm_estimate(self.data.matrix, iters=iters, seed=seed)
            self._lipschitz = self.lam + 1.1 * curvature_bound(self.loss) * top
        return self._lipschitz

    # -- helpers ---------------------------------------------------------

    def _select(self, margins: np.ndarray, shard):
        z = np.asarray(margins, dtype=np.float64)
        if shard is None:
            return z, self.data.labels
        shard = np.asarray(shard, dtype=np.int64)
        return z[shard], self.data.labels[shard]
