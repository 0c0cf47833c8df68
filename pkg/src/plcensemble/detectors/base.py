"""Shared plumbing for the base detectors."""

from __future__ import annotations

from enum import Enum

import numpy as np

from ..errors import DimensionMismatch

# Above this many rows, scoring goes through the distinct rows only.
DEDUP_MIN_ROWS = 4096


class DetectorKind(str, Enum):
    OCSVM = "OCSVM"
    OCNN = "OCNN"
    IFOREST = "IFOREST"


def as_matrix(data, feature_count: int | None = None) -> np.ndarray:
    """Coerce ``data`` (array-like or FeatureMatrix) to a 2-D float64 array."""
    values = getattr(data, "values", data)
    X = np.asarray(values, dtype=np.float64)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, feature_count or 0)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {X.shape}")
    if feature_count is not None and X.shape[1] != feature_count:
        raise DimensionMismatch(f"detector expects {feature_count} features, got {X.shape[1]}")
    return X


def check_train(X: np.ndarray) -> None:
    if X.shape[0] < 2:
        raise ValueError("training data needs at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise ValueError("training data contains NaN or Inf")


def pointwise(fn, X: np.ndarray) -> np.ndarray:
    """Apply a row-wise scoring function, evaluating each distinct row once."""
    if X.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    if X.shape[0] < DEDUP_MIN_ROWS:
        return fn(X)
    uniq, inverse = np.unique(X, axis=0, return_inverse=True)
    if uniq.shape[0] > X.shape[0] // 2:
        return fn(X)
    return fn(uniq)[inverse.reshape(-1)]


def to_list(a: np.ndarray) -> list:
    return np.asarray(a).tolist()
