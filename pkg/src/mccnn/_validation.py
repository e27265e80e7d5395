"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np


def check_sequences(X, dim=None, allow_empty=False):
    """Validate a list of embedded sequences; returns a list of float64 2-D arrays."""
    if isinstance(X, np.ndarray) and X.ndim == 3:
        X = list(X)
    seqs = [np.asarray(x, dtype=np.float64) for x in X]
    if not seqs and not allow_empty:
        raise ValueError("expected at least one sequence")
    for i, s in enumerate(seqs):
        if s.ndim != 2:
            raise ValueError(f"sequence {i} must be 2-D (T, d), got shape {s.shape}")
        if dim is None:
            dim = s.shape[1]
        if s.shape[1] != dim:
            raise ValueError(f"sequence {i} has dimension {s.shape[1]}, expected {dim}")
        if not np.all(np.isfinite(s)):
            raise ValueError(f"sequence {i} contains non-finite values")
    return seqs


def check_labels(y, n_samples, n_classes=None):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ValueError(f"expected {n_samples} labels, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integer class indices")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError("labels must be non-negative class indices")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise ValueError(f"label {int(y.max())} out of range for {n_classes} classes")
    return y
