"""Working correlation matrices, their inverses, and moment estimation of rho.

Exchangeable and AR(1) inverses use closed forms:

    exchangeable:  G^-1 = (1/(1-rho)) * (I - rho/(1+(m-1)rho) * J)
    ar1:           G^-1 = (1/(1-rho^2)) * tridiag(-rho; 1,1+rho^2,...,1+rho^2,1; -rho)

Anything else goes through a symmetric positive definite solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

KINDS = ("independence", "exchangeable", "ar1")

_ALIASES = {
    "indep": "independence",
    "independence": "independence",
    "exch": "exchangeable",
    "exchangeable": "exchangeable",
    "ar1": "ar1",
}

# shrink the open PD-validity interval by this margin when clamping rho
RHO_MARGIN = 1e-6


def canonical_kind(name: str) -> str:
    try:
        return _ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown correlation structure {name!r}") from None


@dataclass(frozen=True)
class WorkingCorrelationSpec:
    """Correlation structure plus (for exchangeable/AR(1)) its parameter.

    ``rho=None`` means the parameter is re-estimated from residuals each
    outer solver iteration; a numeric value pins it.
    """

    kind: str
    rho: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        if self.kind == "independence" and self.rho is not None:
            raise ValueError("independence structure takes no rho")

    def needs_rho(self) -> bool:
        return self.kind != "independence"


def _check_rho(kind: str, rho: float, m: int) -> None:
    if kind == "exchangeable" and m >= 2:
        lo = -1.0 / (m - 1)
        if not (lo < rho < 1.0):
            raise ValueError(
                f"exchangeable rho={rho} outside ({lo:.6g}, 1) for m={m}"
            )
    if kind == "ar1" and not (-1.0 < rho < 1.0):
        raise ValueError(f"ar1 rho={rho} outside (-1, 1)")


def build_correlation(spec: WorkingCorrelationSpec, m: int) -> np.ndarray:
    """The m x m working correlation matrix for ``spec``."""
    if m < 1:
        raise ValueError("m must be positive")
    if spec.kind == "independence" or m == 1:
        return np.eye(m)
    rho = float(spec.rho)
    _check_rho(spec.kind, rho, m)
    if spec.kind == "exchangeable":
        return (1.0 - rho) * np.eye(m) + rho * np.ones((m, m))
    lags = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    return rho ** lags


def inverse_correlation(spec: WorkingCorrelationSpec, m: int) -> np.ndarray:
    """Closed-form inverse of ``build_correlation(spec, m)``."""
    if m < 1:
        raise ValueError("m must be positive")
    if spec.kind == "independence" or m == 1:
        return np.eye(m)
    rho = float(spec.rho)
    _check_rho(spec.kind, rho, m)
    if spec.kind == "exchangeable":
        scale = rho / (1.0 + (m - 1) * rho)
        return (np.eye(m) - scale * np.ones((m, m))) / (1.0 - rho)
    inv = np.zeros((m, m))
    idx = np.arange(m)
    inv[idx, idx] = 1.0 + rho ** 2
    inv[0, 0] = inv[m - 1, m - 1] = 1.0
    inv[idx[:-1], idx[1:]] = -rho
    inv[idx[1:], idx[:-1]] = -rho
    return inv / (1.0 - rho ** 2)


def invert_correlation(
    G: np.ndarray, spec: WorkingCorrelationSpec | None = None
) -> np.ndarray:
    """Invert a working correlation matrix.

    With ``spec`` given (exchangeable or AR(1)) the closed form is used;
    otherwise a symmetric positive definite solve.  A non-PD input raises
    with the smallest eigenvalue in the message.
    """
    G = np.asarray(G, dtype=float)
    m = G.shape[0]
    if spec is not None and spec.kind != "independence":
        return inverse_correlation(spec, m)
    try:
        factor = cho_factor(G, lower=True)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(G)[0])
        raise ValueError(
            f"correlation matrix is not positive definite "
            f"(smallest eigenvalue {smallest:.6g})"
        ) from None
    return cho_solve(factor, np.eye(m))


def estimate_rho(data, beta, family, kind: str) -> float:
    """Moment estimate of the correlation parameter from Pearson residuals.

    exchangeable: sum of within-cluster products over distinct pairs divided
    by (total pair count - p); ar1: the lag-1 analogue over adjacent pairs.
    The p correction is dropped whenever it would make the denominator
    nonpositive (high-dimensional regime).  The estimate is clamped to the
    open interval on which every cluster's matrix stays positive definite,
    shrunk by 1e-6.
    """
    kind = canonical_kind(kind)
    if kind == "independence":
        raise ValueError("independence structure has no rho to estimate")
    beta = np.asarray(beta, dtype=float)
    p = data.p
    num = 0.0
    count = 0.0
    m_max = 1
    for c in data.clusters:
        m_max = max(m_max, c.m)
        if c.m < 2:
            continue
        eta = c.X @ beta
        r = (c.y - family.mean(eta)) / np.sqrt(family.variance(eta))
        if kind == "exchangeable":
            s = r.sum()
            num += 0.5 * (s * s - (r * r).sum())
            count += c.m * (c.m - 1) / 2.0
        else:
            num += float(r[:-1] @ r[1:])
            count += c.m - 1
    if count == 0:
        raise ValueError(
            "no within-cluster pairs available; use the independence structure"
        )
    denom = count - p if count - p > 0 else count
    rho = num / denom
    if kind == "exchangeable":
        lo = (-1.0 / (m_max - 1)) + RHO_MARGIN if m_max >= 2 else -1.0 + RHO_MARGIN
    else:
        lo = -1.0 + RHO_MARGIN
    return float(np.clip(rho, lo, 1.0 - RHO_MARGIN))
