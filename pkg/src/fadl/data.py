"""Core data containers: sparse examples and immutable datasets.

A Dataset stores n sparse feature rows and n labels in {-1, +1}.  Rows are
kept in a CSR matrix so margins (X w), loss gradients (X^T u) and row
slices for shards are cheap; the transpose is cached on first use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["SparseVector", "Dataset"]


@dataclass(frozen=True)
class SparseVector:
    """One example's features as parallel index/value arrays.

    Indices are 0-based, strictly increasing; explicitly stored zeros are
    rejected so nnz counts are meaningful.
    """

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.ndim != 1 or val.ndim != 1 or idx.shape[0] != val.shape[0]:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if idx[0] < 0:
                raise ValueError("feature indices must be nonnegative")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("feature indices must be strictly increasing")
            if np.any(val == 0.0):
                raise ValueError("explicitly stored zero values are not allowed")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def dot(self, w: np.ndarray) -> float:
        return float(np.dot(self.values, np.asarray(w)[self.indices]))


class Dataset:
    """Immutable labeled sparse dataset.

    Parameters
    ----------
    examples : sequence of SparseVector
    labels : array-like of {-1, +1}
    n_features : optional; defaults to 1 + max stored index (0 when empty).
    """

    def __init__(self, examples, labels, n_features: int | None = None):
        labels = np.asarray(labels, dtype=np.float64)
        if labels.ndim != 1 or labels.shape[0] != len(examples):
            raise ValueError("labels must be 1-d with one entry per example")
        if labels.size and not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

        max_idx = -1
        for ex in examples:
            if ex.nnz:
                max_idx = max(max_idx, int(ex.indices[-1]))
        if n_features is None:
            n_features = max_idx + 1
        elif max_idx >= n_features:
            raise ValueError(
                f"feature index {max_idx} out of range for n_features={n_features}"
            )

        indptr = np.zeros(len(examples) + 1, dtype=np.int64)
        for i, ex in enumerate(examples):
            indptr[i + 1] = indptr[i] + ex.nnz
        nnz_total = int(indptr[-1])
        indices = np.empty(nnz_total, dtype=np.int64)
        values = np.empty(nnz_total, dtype=np.float64)
        for i, ex in enumerate(examples):
            indices[indptr[i] : indptr[i + 1]] = ex.indices
            values[indptr[i] : indptr[i + 1]] = ex.values

        self._matrix = sp.csr_matrix(
            (values, indices, indptr), shape=(len(examples), n_features)
        )
        self._labels = labels
        self._labels.setflags(write=False)
        self._transpose = None

    @classmethod
    def from_csr(cls, matrix: sp.csr_matrix, labels) -> "Dataset":
        """Wrap an existing CSR matrix (used by generators and row slicing)."""
        ds = cls.__new__(cls)
        matrix = matrix.tocsr()
        matrix.sort_indices()
        ds._matrix = matrix
        labels = np.asarray(labels, dtype=np.float64)
        if labels.shape != (matrix.shape[0],):
            raise ValueError("labels shape does not match matrix rows")
        if labels.size and not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        ds._labels = labels
        ds._labels.setflags(write=False)
        ds._transpose = None
        return ds

    @property
    def n_examples(self) -> int:
        return self._matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self._matrix.shape[1]

    @property
    def nnz(self) -> int:
        return int(self._matrix.nnz)

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._matrix

    @property
    def matrix_t(self) -> sp.csr_matrix:
        """Cached transpose in CSR form, for X^T u products."""
        if self._transpose is None:
            self._transpose = self._matrix.T.tocsr()
        return self._transpose

    def example(self, i: int) -> SparseVector:
        lo, hi = self._matrix.indptr[i], self._matrix.indptr[i + 1]
        return SparseVector(
            self._matrix.indices[lo:hi].astype(np.int64),
            self._matrix.data[lo:hi].copy(),
        )

    def rows(self, idx) -> "Dataset":
        """Sub-dataset containing the given rows, in the given order."""
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset.from_csr(self._matrix[idx], self._labels[idx])

    def __len__(self) -> int:
        return self.n_examples
