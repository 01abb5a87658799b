"""Penalty rate functions for folded-concave and lasso regularization.

``rate`` is the derivative-scale penalty rho_lambda(t) that enters the
estimating equation and the screening threshold:

    scad:   lambda                   for t <= lambda
            (a*lambda - t)/(a - 1)   for lambda < t <= a*lambda
            0                        for t >  a*lambda
    mcp:    max(lambda - t/gamma, 0)
    lasso:  lambda                   (constant)

For scad and mcp the rate vanishes at large t, which is what lets strong
signals escape shrinkage; lambda^-1 * rate(0+) equals 1 for all three, so
the screening threshold is lambda itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("scad", "mcp", "lasso")

DEFAULT_SCAD_A = 3.7
DEFAULT_MCP_GAMMA = 3.0


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty kind, tuning parameter and shape hyperparameters."""

    kind: str
    lam: float
    a: float = DEFAULT_SCAD_A
    gamma: float = DEFAULT_MCP_GAMMA

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty {self.kind!r}; choose from {KINDS}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.kind == "scad" and self.a <= 2:
            raise ValueError("scad requires a > 2")
        if self.kind == "mcp" and self.gamma <= 1:
            raise ValueError("mcp requires gamma > 1")

    def rate(self, t):
        """rho_lambda(t) evaluated elementwise for t >= 0."""
        t = np.asarray(t, dtype=float)
        lam = self.lam
        if lam == 0.0:
            return np.zeros_like(t)
        if self.kind == "lasso":
            return np.full_like(t, lam)
        if self.kind == "scad":
            decay = np.maximum(self.a * lam - t, 0.0) / (self.a - 1.0)
            return np.where(t <= lam, lam, decay)
        return np.maximum(lam - t / self.gamma, 0.0)

    def rate_at_zero_plus(self) -> float:
        """lambda^-1 * rate(0+); the screen threshold is lam times this."""
        if self.lam <= 0.0:
            raise ValueError("rate at zero is undefined for lambda = 0")
        return 1.0
