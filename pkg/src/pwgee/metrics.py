"""Selection and estimation metrics for the benchmark tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SelectionTruth:
    """True coefficient vector and the support implied by it."""

    beta_star: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "beta_star", np.asarray(self.beta_star, dtype=float)
        )

    @property
    def true_support(self) -> frozenset:
        return frozenset(int(j) for j in np.flatnonzero(self.beta_star != 0.0))


def selection_metrics(beta_hat, truth: SelectionTruth) -> tuple[int, int, int]:
    """(TP, FP, CR) of an already-thresholded coefficient vector.

    TP counts true variables recovered, FP spurious ones, and CR is 1
    exactly when the true support is contained in the selected set.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.shape != truth.beta_star.shape:
        raise ValueError("dimension mismatch")
    selected = frozenset(int(j) for j in np.flatnonzero(beta_hat != 0.0))
    s = truth.true_support
    tp = len(selected & s)
    fp = len(selected - s)
    cr = 1 if s <= selected else 0
    return tp, fp, cr


def mse(beta_hats, beta_star) -> float:
    """Mean over replicates of the squared L2 distance to the truth."""
    beta_star = np.asarray(beta_star, dtype=float)
    hats = list(beta_hats)
    if not hats:
        raise ValueError("empty replicate list")
    total = 0.0
    for b in hats:
        b = np.asarray(b, dtype=float)
        if b.shape != beta_star.shape:
            raise ValueError("dimension mismatch")
        total += float(np.sum((b - beta_star) ** 2))
    return total / len(hats)


def classification_error(fitted_probs, labels, cutoff: float = 0.5) -> float:
    """Fraction misclassified; a probability equal to the cutoff counts as 1."""
    probs = np.asarray(fitted_probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if probs.shape != labels.shape:
        raise ValueError("length mismatch")
    if probs.size == 0:
        raise ValueError("empty input")
    predicted = (probs >= cutoff).astype(float)
    return float(np.mean(predicted != labels))
