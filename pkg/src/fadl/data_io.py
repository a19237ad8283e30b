"""Dataset input/output, sharding and run metrics.

The text format is the usual sparse classification one: per line a label
(+1/-1; 0/1 files are accepted with a warning and mapped to -1/+1) followed
by strictly increasing 1-based index:value pairs.  '#' starts a comment,
blank lines are skipped, malformed lines raise ParseError with the line
number.

Metrics are newline-delimited JSON records, one per outer iteration, which
round-trip losslessly (floats travel as shortest repr); a fixed-column text
table can be derived from them for quick plotting.
"""

from __future__ import annotations

import enum
import io
import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import Dataset, SparseVector

__all__ = [
    "ParseError",
    "parse_libsvm",
    "write_libsvm",
    "PartitionScheme",
    "PartitionPlan",
    "partition",
    "synth_classification",
    "MetricsRecord",
    "write_metrics",
    "read_metrics",
    "write_metrics_table",
]


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _iter_lines(source):
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def parse_libsvm(source, n_features: int | None = None) -> Dataset:
    """Parse sparse classification data from a path, file object or lines."""
    examples = []
    labels = []
    saw_zero_label = False
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label_val = float(tokens[0])
        except ValueError:
            raise ParseError(lineno, f"bad label {tokens[0]!r}") from None
        if label_val == 1.0:
            label = 1.0
        elif label_val == -1.0:
            label = -1.0
        elif label_val == 0.0:
            label = -1.0
            saw_zero_label = True
        else:
            raise ParseError(lineno, f"label must be +1, -1 or 0, got {tokens[0]!r}")

        idx = []
        val = []
        prev = 0
        for tok in tokens[1:]:
            try:
                pos, _, num = tok.partition(":")
                j = int(pos)
                x = float(num)
            except ValueError:
                raise ParseError(lineno, f"bad feature token {tok!r}") from None
            if j < 1:
                raise ParseError(lineno, f"feature index {j} is not 1-based positive")
            if j <= prev:
                raise ParseError(
                    lineno, f"feature indices must be strictly increasing at {tok!r}"
                )
            prev = j
            if x == 0.0:
                continue  # explicit zeros carry no information; drop them
            idx.append(j - 1)
            val.append(x)
        labels.append(label)
        examples.append(
            SparseVector(np.asarray(idx, dtype=np.int64), np.asarray(val, dtype=np.float64))
        )
    if saw_zero_label:
        warnings.warn("labels given as 0/1 were mapped to -1/+1", stacklevel=2)
    return Dataset(examples, np.asarray(labels, dtype=np.float64), n_features)


def _format_value(x: float) -> str:
    return repr(float(x))


def write_libsvm(dataset: Dataset, sink) -> None:
    """Serialize to the text format; parse(write(ds)) reproduces ds exactly."""
    own = isinstance(sink, (str, Path))
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        mat = dataset.matrix
        for i in range(dataset.n_examples):
            lo, hi = mat.indptr[i], mat.indptr[i + 1]
            parts = ["+1" if dataset.labels[i] > 0 else "-1"]
            for j, x in zip(mat.indices[lo:hi], mat.data[lo:hi]):
                parts.append(f"{j + 1}:{_format_value(x)}")
            fh.write(" ".join(parts) + "\n")
    finally:
        if own:
            fh.close()


# -- sharding -----------------------------------------------------------------


class PartitionScheme(enum.Enum):
    ROUND_ROBIN = "round_robin"
    SHUFFLED = "shuffled"


@dataclass(frozen=True)
class PartitionPlan:
    n_examples: int
    n_nodes: int
    scheme: PartitionScheme
    seed: int
    assignment: np.ndarray

    def shard(self, node_id: int) -> np.ndarray:
        if not (0 <= node_id < self.n_nodes):
            raise ValueError(f"node_id {node_id} out of range")
        return np.flatnonzero(self.assignment == node_id)

    def shards(self) -> list[np.ndarray]:
        return [self.shard(p) for p in range(self.n_nodes)]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_nodes)


def partition(
    n_examples: int,
    n_nodes: int,
    scheme: PartitionScheme = PartitionScheme.ROUND_ROBIN,
    seed: int = 0,
) -> PartitionPlan:
    """Assign examples to nodes; shard sizes never differ by more than one."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if n_examples < 0:
        raise ValueError("n_examples must be >= 0")
    if n_examples > 0 and n_nodes > n_examples:
        raise ValueError(
            f"cannot spread {n_examples} examples over {n_nodes} nodes "
            "without empty shards"
        )
    if scheme is PartitionScheme.ROUND_ROBIN:
        assignment = np.arange(n_examples, dtype=np.int64) % n_nodes
    elif scheme is PartitionScheme.SHUFFLED:
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n_examples)
        assignment = np.empty(n_examples, dtype=np.int64)
        assignment[perm] = np.arange(n_examples, dtype=np.int64) % n_nodes
    else:
        raise ValueError(f"unknown scheme: {scheme!r}")
    assignment.setflags(write=False)
    return PartitionPlan(
        n_examples=n_examples,
        n_nodes=n_nodes,
        scheme=scheme,
        seed=seed,
        assignment=assignment,
    )


# -- synthetic instances --------------------------------------------------------


def synth_classification(
    n_examples: int,
    n_features: int,
    density: float,
    separability: float,
    seed: int = 0,
    *,
    feature_skew: float = 0.0,
    row_normalize: bool = False,
):
    """Sparse gaussian features with labels from a planted unit vector.

    Labels are sign(x . w_star) (ties broken toward +1), then flipped
    independently with probability 1 - separability.  Returns
    (dataset, w_star).  Per-example nonzero counts are Binomial(m, density),
    so rows can be empty at very small densities.

    feature_skew > 0 draws support positions with probability proportional
    to (j+1)^(-feature_skew) instead of uniformly, mimicking the power-law
    feature frequencies of bag-of-words data; a handful of hot features then
    appear in most rows while most of the space stays untouched.
    row_normalize scales each nonempty row to unit euclidean norm.
    """
    if not (0.0 < density <= 1.0):
        raise ValueError("density must lie in (0, 1]")
    if not (0.0 <= separability <= 1.0):
        raise ValueError("separability must lie in [0, 1]")
    if feature_skew < 0.0:
        raise ValueError("feature_skew must be nonnegative")
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(n_features)
    norm = np.linalg.norm(w_star)
    if norm > 0:
        w_star /= norm

    weights = None
    if feature_skew > 0.0:
        weights = (np.arange(n_features) + 1.0) ** (-feature_skew)
        weights /= weights.sum()

    counts = rng.binomial(n_features, density, size=n_examples)
    indptr = np.zeros(n_examples + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    for i in range(n_examples):
        k = counts[i]
        if not k:
            continue
        if weights is None:
            chosen = rng.choice(n_features, size=k, replace=False)
        elif k >= n_features:
            chosen = np.arange(n_features)
        else:
            # weighted sampling without replacement: smallest exponential
            # keys scaled by inverse probability
            keys = rng.exponential(1.0, n_features) / weights
            chosen = np.argpartition(keys, k)[:k]
        chosen.sort()
        indices[indptr[i] : indptr[i + 1]] = chosen
    values = rng.standard_normal(indptr[-1])
    values[values == 0.0] = 1e-12  # keep stored entries nonzero
    if row_normalize:
        for i in range(n_examples):
            row = values[indptr[i] : indptr[i + 1]]
            if row.size:
                row /= np.linalg.norm(row)

    matrix = sp.csr_matrix(
        (values, indices, indptr), shape=(n_examples, n_features)
    )
    margins = matrix @ w_star
    labels = np.where(margins > 0.0, 1.0, np.where(margins < 0.0, -1.0, 1.0))
    if separability < 1.0:
        flips = rng.random(n_examples) < (1.0 - separability)
        labels = np.where(flips, -labels, labels)
    return Dataset.from_csr(matrix, labels), w_star


# -- metrics -------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRecord:
    run_id: str
    method: str
    family: str | None
    nodes: int
    outer_iter: int
    f: float
    grad_norm: float
    rel_gap: float | None
    comm_passes: int
    probes: int
    inner_iterations: int
    cos_angle: float | None
    elapsed_seconds: float
    cost_units: float


_TABLE_COLUMNS = [f.strip() for f in (
    "run_id method family nodes outer_iter f grad_norm rel_gap "
    "comm_passes probes inner_iterations cos_angle elapsed_seconds cost_units"
).split()]


def write_metrics(records, sink) -> None:
    own = isinstance(sink, (str, Path))
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
    finally:
        if own:
            fh.close()


def read_metrics(source) -> list[MetricsRecord]:
    records = []
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            payload = json.loads(line)
            records.append(MetricsRecord(**payload))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ParseError(lineno, f"bad metrics record: {exc}") from None
    return records


def write_metrics_table(records, sink) -> None:
    """Derived tab-separated table with a fixed header, for plotting."""
    own = isinstance(sink, (str, Path))
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        fh.write("\t".join(_TABLE_COLUMNS) + "\n")
        for rec in records:
            row = asdict(rec)
            cells = []
            for col in _TABLE_COLUMNS:
                v = row[col]
                if v is None:
                    cells.append("")
                elif isinstance(v, float):
                    cells.append(repr(v))
                else:
                    cells.append(str(v))
            fh.write("\t".join(cells) + "\n")
    finally:
        if own:
            fh.close()


def metrics_to_stringio(records) -> io.StringIO:
    buf = io.StringIO()
    write_metrics(records, buf)
    buf.seek(0)
    return buf
