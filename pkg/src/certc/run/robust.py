"""Robustness queries over certified output bounds.

A classification is verified on an input region when the certified lower
bound of the labeled class exceeds the certified upper bound of every
other class: no point of the region can flip the argmax.
"""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np


def margins(lower: np.ndarray, upper: np.ndarray,
            labels: Sequence[int]) -> np.ndarray:
    """Certified margin per batch row: l[label] - max over others of u.

    Positive margin proves the label; a network with a single output has
    no competing class and gets an infinite margin.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    labels = np.asarray(labels, dtype=int)
    b, n = lower.shape
    if labels.shape != (b,):
        raise ValueError("expected %d labels, got %r" % (b, labels.shape))
    if np.any(labels < 0) or np.any(labels >= n):
        raise ValueError("label out of range for %d outputs" % n)
    if n == 1:
        return np.full(b, np.inf)
    rows = np.arange(b)
    own = lower[rows, labels]
    masked = upper.copy()
    masked[rows, labels] = -np.inf
    return own - masked.max(axis=1)


def verified(lower: np.ndarray, upper: np.ndarray,
             labels: Sequence[int]) -> np.ndarray:
    """Boolean mask of batch rows whose label is certified."""
    return margins(lower, upper, labels) > 0.0


def verified_fraction(lower: np.ndarray, upper: np.ndarray,
                      labels: Sequence[int]) -> float:
    mask = verified(lower, upper, labels)
    return float(mask.mean()) if mask.size else 0.0


def summarize(lower: np.ndarray, upper: np.ndarray,
              labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Margins and verification mask in one call."""
    m = margins(lower, upper, labels)
    return m, m > 0.0
