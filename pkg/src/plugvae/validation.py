"""Input validation helpers shared by the estimators."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.exceptions import NotFittedError


def check_matrix(X, n_cols: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float32 array, optionally enforcing a column count."""
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {arr.shape[1]}")
    return arr


def check_id_sequences(sequences: Sequence[Sequence[int]], vocab_size: int) -> list[list[int]]:
    """Validate a non-empty batch of token-id sequences against a vocabulary."""
    if len(sequences) == 0:
        raise ValueError("empty batch")
    out = []
    for seq in sequences:
        ids = list(seq)
        if any(i < 0 or i >= vocab_size for i in ids):
            raise ValueError(f"token id out of range for vocab size {vocab_size}")
        out.append(ids)
    return out


def check_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
