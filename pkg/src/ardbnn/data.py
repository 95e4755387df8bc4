"""Taiwan credit card data: CSV ingestion, min-max scaling and the 70:30 split."""
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataParseError, EmptyInputError, InputShapeError

# column order follows the dataset's X1..X23 attribute table
TAIWAN_FEATURES = (
    ("LIMIT_BAL", "SEX", "EDUCATION", "MARRIAGE", "AGE")
    + ("PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6")
    + tuple(f"BILL_AMT{i}" for i in range(1, 7))
    + tuple(f"PAY_AMT{i}" for i in range(1, 7))
)
TAIWAN_TARGET = "default payment next month"
TAIWAN_ID = "ID"


@dataclass(frozen=True)
class CsvFormat:
    """Column names of an input CSV; defaults match the UCI distribution."""

    feature_columns: tuple = TAIWAN_FEATURES
    target_column: str = TAIWAN_TARGET
    id_column: str = TAIWAN_ID


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels).reshape(-1)
        names = tuple(self.feature_names) or tuple(f"x{i + 1}" for i in range(X.shape[1]))
        if X.ndim != 2 or X.shape[0] != y.shape[0] or len(names) != X.shape[1]:
            raise InputShapeError(
                f"features {X.shape}, labels {y.shape}, {len(names)} names do not agree"
            )
        if not np.all(np.isfinite(X)):
            raise DataParseError("features contain missing or non-finite values")
        if not np.all((y == 0) | (y == 1)):
            raise DataParseError("labels must be 0 or 1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(np.int8))
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def take(self, idx):
        return Dataset(self.features[idx], self.labels[idx], self.feature_names)


def _numeric_block(frame, columns, path):
    block = frame.loc[:, list(columns)]
    numeric = block.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy()
    if bad.any():
        r, c = np.argwhere(bad)[0]
        # +2: one header line, 1-based row numbers
        raise DataParseError(
            f"{path}: non-numeric or missing value {block.iat[r, c]!r} "
            f"at line {r + 2}, column {columns[c]!r}"
        )
    return numeric.to_numpy(dtype=float)


def read_feature_csv(path, feature_columns=TAIWAN_FEATURES):
    """Read only the feature columns of a CSV; returns (frame, matrix)."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise DataParseError(f"{path}: {exc}") from exc
    missing = [c for c in feature_columns if c not in frame.columns]
    if missing:
        raise DataParseError(f"{path}: missing column(s) {missing}")
    return frame, _numeric_block(frame, tuple(feature_columns), path)


def load_taiwan_csv(path, format_spec=None):
    """Load a UCI-format credit card CSV into a :class:`Dataset`.

    The ID column (if present) is dropped; features come out in attribute
    order X1..X23 regardless of their order in the file.

    Raises
    ------
    DataParseError
        Missing columns, non-numeric cells or labels outside {0, 1}; the
        message names the offending line and column.
    """
    fmt = format_spec or CsvFormat()
    frame, X = read_feature_csv(path, fmt.feature_columns)
    if fmt.target_column not in frame.columns:
        raise DataParseError(f"{path}: missing target column {fmt.target_column!r}")
    y = _numeric_block(frame, (fmt.target_column,), path)[:, 0]
    bad = np.flatnonzero((y != 0) & (y != 1))
    if bad.size:
        raise DataParseError(
            f"{path}: label {y[bad[0]]!r} at line {bad[0] + 2}, column "
            f"{fmt.target_column!r} is not 0/1"
        )
    return Dataset(X, y.astype(np.int8), tuple(fmt.feature_columns))


class MinMaxScaler(TransformerMixin, BaseEstimator):
    """Per-feature affine map onto [0, 1] using the fitting set's extremes.

    Constant features map to 0. Data outside the fitted range is not clipped.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[0] == 0:
            raise EmptyInputError("cannot fit a scaler on zero rows")
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, ("data_min_", "data_max_"))
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InputShapeError(
                f"scaler fitted on {self.n_features_in_} features, got {X.shape[1]}"
            )
        span = self.data_max_ - self.data_min_
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (X - self.data_min_) / safe, 0.0)

    def out_of_range(self, X):
        """Boolean mask of entries outside the fitted [min, max] range."""
        check_is_fitted(self, ("data_min_", "data_max_"))
        X = check_array(X, dtype=float)
        return (X < self.data_min_) | (X > self.data_max_)


def fit_min_max(dataset):
    return MinMaxScaler().fit(dataset.features)


def apply_min_max(scaler, dataset):
    return Dataset(scaler.transform(dataset.features), dataset.labels, dataset.feature_names)


def split_70_30(dataset, seed):
    """Shuffle rows with ``seed`` and cut at ``floor(0.7 * n)``.

    Returns
    -------
    train, test : Dataset
    """
    n = dataset.n_rows
    if n < 10:
        raise EmptyInputError(f"need at least 10 rows to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(np.floor(0.7 * n))
    return dataset.take(perm[:cut]), dataset.take(perm[cut:])
