"""Marginal model families: mean link, its derivative, working variance.

The working variance is the canonical GLM variance function with the
dispersion fixed at 1; the estimating equations stay valid when it is
misspecified, so no dispersion estimation is done.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

KINDS = ("gaussian", "poisson", "binomial")

# keeps 1/sqrt(variance) finite at saturated binomial fits; engagements are
# counted and surfaced in fit diagnostics
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class FamilySpec:
    """Mean/derivative/variance triple selected by ``kind``."""

    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown family {self.kind!r}; choose from {KINDS}")

    def mean(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind == "gaussian":
            return eta.copy()
        if self.kind == "poisson":
            with np.errstate(over="ignore"):
                return np.exp(eta)
        return expit(eta)

    def mean_deriv(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind == "gaussian":
            return np.ones_like(eta)
        if self.kind == "poisson":
            with np.errstate(over="ignore"):
                return np.exp(eta)
        mu = expit(eta)
        return mu * (1.0 - mu)

    def variance(self, eta):
        return self._variance_and_floor(eta)[0]

    def variance_floor_count(self, eta) -> int:
        """How many entries of variance(eta) were clipped at the floor."""
        return self._variance_and_floor(eta)[1]

    def _variance_and_floor(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind == "gaussian":
            return np.ones_like(eta), 0
        if self.kind == "poisson":
            with np.errstate(over="ignore"):
                return np.exp(eta), 0
        mu = expit(eta)
        raw = mu * (1.0 - mu)
        n_floor = int(np.count_nonzero(raw < VARIANCE_FLOOR))
        if n_floor:
            raw = np.maximum(raw, VARIANCE_FLOOR)
        return raw, n_floor

    def validate_response(self, y) -> None:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("response contains non-finite values")
        if self.kind == "poisson":
            if np.any(y < 0) or np.any(y != np.floor(y)):
                raise ValueError("poisson responses must be nonnegative integers")
        elif self.kind == "binomial":
            if not np.all(np.isin(y, (0.0, 1.0))):
                raise ValueError("binomial responses must be 0 or 1")


GAUSSIAN = FamilySpec("gaussian")
POISSON = FamilySpec("poisson")
BINOMIAL = FamilySpec("binomial")
