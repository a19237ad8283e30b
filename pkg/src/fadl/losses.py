"""Convex margin losses for binary linear classification.

Each loss is a function of the margin z = w . x and the label y in {-1, +1}.
All routines are vectorized over numpy arrays and return float64 arrays of
the same shape.  Second derivatives are taken with respect to z; for the
squared hinge, which is C^1 but not C^2, the generalized second derivative
is used (2 on the active set, 0 elsewhere).
"""

from __future__ import annotations

import enum

import numpy as np
from scipy.special import expit

__all__ = [
    "LossKind",
    "loss_value",
    "loss_derivative",
    "loss_second_derivative",
    "curvature_bound",
]


class LossKind(enum.Enum):
    """Supported per-example losses."""

    LEAST_SQUARES = "least_squares"
    LOGISTIC = "logistic"
    SQUARED_HINGE = "squared_hinge"


def _as_arrays(z, y):
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return z, y


def loss_value(kind: LossKind, z, y):
    """Per-example loss l(z, y)."""
    z, y = _as_arrays(z, y)
    if kind is LossKind.LEAST_SQUARES:
        r = z - y
        return 0.5 * r * r
    if kind is LossKind.LOGISTIC:
        # log(1 + exp(-yz)) computed stably for large |yz|
        return np.logaddexp(0.0, -y * z)
    if kind is LossKind.SQUARED_HINGE:
        gap = np.maximum(0.0, 1.0 - y * z)
        return gap * gap
    raise ValueError(f"unknown loss kind: {kind!r}")


def loss_derivative(kind: LossKind, z, y):
    """dl/dz."""
    z, y = _as_arrays(z, y)
    if kind is LossKind.LEAST_SQUARES:
        return z - y
    if kind is LossKind.LOGISTIC:
        # -y * sigmoid(-yz); expit avoids overflow at extreme margins
        return -y * expit(-y * z)
    if kind is LossKind.SQUARED_HINGE:
        gap = np.maximum(0.0, 1.0 - y * z)
        return -2.0 * y * gap
    raise ValueError(f"unknown loss kind: {kind!r}")


def loss_second_derivative(kind: LossKind, z, y):
    """d^2l/dz^2 (generalized for the squared hinge)."""
    z, y = _as_arrays(z, y)
    if kind is LossKind.LEAST_SQUARES:
        return np.ones_like(z)
    if kind is LossKind.LOGISTIC:
        s = expit(y * z)
        return s * (1.0 - s)
    if kind is LossKind.SQUARED_HINGE:
        return np.where(y * z < 1.0, 2.0, 0.0)
    raise ValueError(f"unknown loss kind: {kind!r}")


def curvature_bound(kind: LossKind) -> float:
    """Uniform upper bound on d^2l/dz^2 over all (z, y).

    Used to bound the gradient Lipschitz constant of the regularized
    objective by lam + curvature_bound * lambda_max(X^T X).
    """
    if kind is LossKind.LEAST_SQUARES:
        return 1.0
    if kind is LossKind.LOGISTIC:
        return 0.25
    if kind is LossKind.SQUARED_HINGE:
        return 2.0
    raise ValueError(f"unknown loss kind: {kind!r}")
