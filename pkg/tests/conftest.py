import numpy as np
import pytest

from fadl import Dataset, LossKind, Objective, SparseVector
from fadl.losses import loss_derivative, loss_second_derivative, loss_value


def random_instance(rng, n, m, density=0.5, loss=LossKind.LOGISTIC, lam=1.0):
    """Small random sparse instance with nonempty rows."""
    rows = []
    labels = []
    for _ in range(n):
        k = max(1, rng.binomial(m, density))
        idx = np.sort(rng.choice(m, size=k, replace=False))
        val = rng.standard_normal(k)
        val[val == 0.0] = 0.5
        rows.append(SparseVector(idx, val))
        labels.append(1.0 if rng.random() < 0.5 else -1.0)
    ds = Dataset(rows, np.asarray(labels), n_features=m)
    return Objective(ds, loss, lam)


def dense_value(obj, w):
    x = obj.data.matrix.toarray()
    z = x @ w
    return 0.5 * obj.lam * float(w @ w) + float(
        np.sum(loss_value(obj.loss, z, obj.data.labels))
    )


def dense_gradient(obj, w):
    x = obj.data.matrix.toarray()
    z = x @ w
    return obj.lam * w + x.T @ loss_derivative(obj.loss, z, obj.data.labels)


def dense_hessian(obj, w):
    x = obj.data.matrix.toarray()
    z = x @ w
    lpp = loss_second_derivative(obj.loss, z, obj.data.labels)
    return obj.lam * np.eye(obj.data.n_features) + x.T @ (lpp[:, None] * x)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, echoed after the test summary so the
# pass/fail verdicts are visible without -s.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
