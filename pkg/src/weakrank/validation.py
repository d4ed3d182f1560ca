"""Input validation helpers shared by the estimator-style classes."""

from __future__ import annotations

import numpy as np


def check_label_array(L) -> np.ndarray:
    """Coerce a LabelMatrix or array-like to a validated (n, k) int array."""
    labels = getattr(L, "labels", L)
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"label array must be 2-D (pairs x functions), got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("label array is empty")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == arr.astype(np.int64)):
            raise ValueError("label array has non-integer entries")
        arr = arr.astype(np.int64)
    bad = set(np.unique(arr)) - {-1, 0, 1}
    if bad:
        raise ValueError(f"label entries must be in {{-1,0,1}}, found {sorted(bad)}")
    return arr.astype(np.int8)


def check_feature_array(X, n_features: int | None = None) -> np.ndarray:
    """Coerce to a finite float64 (n, d) matrix, optionally checking d."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"feature array must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature array has NaN/Inf entries")
    if n_features is not None and arr.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {arr.shape[1]}")
    return arr


def check_unit_interval(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr
