import os
from pathlib import Path

import numpy as np
import pytest

from ardbnn.data import TAIWAN_FEATURES, TAIWAN_ID, TAIWAN_TARGET, Dataset
from ardbnn.network import NetworkShape
from ardbnn.posterior import default_ard_grouping

REPO = Path(__file__).resolve().parents[1]
CREDIT_CSV = Path(os.environ.get("ARDBNN_CREDIT_CSV", REPO / "data" / "default_of_credit_card_clients.csv"))

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def write_credit_csv(path, X, y, ids=None):
    """Write rows in the UCI column layout."""
    header = [TAIWAN_ID, *TAIWAN_FEATURES, TAIWAN_TARGET]
    if ids is None:
        ids = range(1, len(y) + 1)
    lines = [",".join(header)]
    for i, row, t in zip(ids, X, y):
        lines.append(",".join([str(i), *("%.17g" % v for v in row), str(int(t))]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def synthetic_credit(n, seed=0):
    """Credit-like rows where PAY_0 drives the default probability."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([
        rng.integers(1, 50, n) * 10000,          # LIMIT_BAL
        rng.integers(1, 3, n),                   # SEX
        rng.integers(1, 5, n),                   # EDUCATION
        rng.integers(1, 4, n),                   # MARRIAGE
        rng.integers(21, 70, n),                 # AGE
        rng.integers(-2, 9, (n, 6)),             # PAY_0 .. PAY_6
        rng.integers(-1000, 200000, (n, 6)),     # BILL_AMT1..6
        rng.integers(0, 50000, (n, 6)),          # PAY_AMT1..6
    ]).astype(float)
    logit = -1.5 + 0.8 * X[:, 5]
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(int)
    return X, y


@pytest.fixture
def credit_csv(tmp_path):
    X, y = synthetic_credit(200, seed=1)
    return write_credit_csv(tmp_path / "credit.csv", X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_problem(rng, n_in=None, n_hidden=None, n_rows=None, scale=0.7):
    """Random shape (<= 5-4-1), weights, data, grouping and alpha."""
    n_in = n_in or int(rng.integers(1, 6))
    n_hidden = n_hidden or int(rng.integers(1, 5))
    n_rows = n_rows or int(rng.integers(1, 21))
    shape = NetworkShape(n_in, n_hidden)
    w = scale * rng.standard_normal(shape.n_params)
    X = rng.standard_normal((n_rows, n_in))
    t = rng.integers(0, 2, n_rows)
    grouping = default_ard_grouping(shape, [f"f{i}" for i in range(n_in)])
    alpha = rng.uniform(0.1, 3.0, grouping.n_classes)
    return shape, w, Dataset(X, t, tuple(grouping.class_labels[:n_in])), grouping, alpha
