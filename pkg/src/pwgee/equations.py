"""Estimating function, Fisher-scoring matrix and penalty ridge.

For cluster i with design X_i, responses y_i, linear predictor eta_i and
weighted inverse correlation Gt_i, the per-cluster score is

    score_i(beta) = X_i' diag(mu'/sqrt(phi)) Gt_i diag(1/sqrt(phi)) (y_i - mu)

and the averaged equations, scoring matrix and ridge are

    Q_n(beta)    = n^-1 sum_i score_i(beta)
    H_n(beta, S) = n^-1 sum_i A_i' Gt_i A_i,  A_i = diag(mu'/sqrt(phi)) X_i[:, S]
    D_n(beta, S) = diag( rate(|beta_j|) / (c + |beta_j|) ),  j in S

H_n is the Fisher-scoring form: derivatives of the weight factors are
dropped, matching the quasi-Newton update it feeds.  Clusters are grouped
by size internally so evaluation is a handful of batched matmuls; the
group order is fixed, so results are bit-reproducible.
"""

from __future__ import annotations

import numpy as np

from .dataset import LongitudinalDataset
from .family import FamilySpec

# ridge offset keeping D_n finite at exact zeros; far below the 1e-3
# selection threshold so it cannot distort the active set
D_N_OFFSET = 1e-6


class GroupedDesign:
    """Clusters stacked by size: X as (g, m, p), y as (g, m), plus indices.

    Also memoizes the family terms (mu'/sqrt(phi), pearson residuals) for
    the most recent coefficient vectors; they do not depend on the weight
    matrices, so every context sharing this design reuses them.
    """

    def __init__(self, data: LongitudinalDataset):
        self.data = data
        self.n = data.n
        self.p = data.p
        sizes = data.sizes
        self.groups = []
        for m in sorted(set(int(s) for s in sizes)):
            idx = np.flatnonzero(sizes == m)
            X = np.stack([data.clusters[i].X for i in idx])
            y = np.stack([data.clusters[i].y for i in idx])
            self.groups.append((m, idx, X, y))
        self._cache = {}

    def prepared(self, family: FamilySpec, beta: np.ndarray):
        """[(a, rs) per group], total variance-floor count, for ``beta``."""
        key = (family.kind, beta.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        terms = []
        n_floor = 0
        for m, idx, X, y in self.groups:
            eta = X @ beta
            mu = family.mean(eta)
            d = family.mean_deriv(eta)
            phi, nf = family._variance_and_floor(eta)
            n_floor += nf
            sq = np.sqrt(phi)
            terms.append((d / sq, (y - mu) / sq))
        if len(self._cache) >= 2:
            self._cache.clear()
        self._cache[key] = (terms, n_floor)
        return terms, n_floor


class EquationContext:
    """Immutable bundle of data, family and per-cluster weighted inverses."""

    def __init__(self, data, family: FamilySpec, weighted_inverses):
        if isinstance(data, GroupedDesign):
            self.design = data
        else:
            self.design = GroupedDesign(data)
        self.data = self.design.data
        self.family = family
        self.weighted_inverses = list(weighted_inverses)
        if len(self.weighted_inverses) != self.data.n:
            raise ValueError("need one weighted inverse per cluster")
        for c, G in zip(self.data.clusters, self.weighted_inverses):
            if G.shape != (c.m, c.m):
                raise ValueError(
                    f"weighted inverse shape {G.shape} does not match "
                    f"cluster size {c.m}"
                )
        self._gt = [
            np.stack([self.weighted_inverses[i] for i in idx])
            for _, idx, _, _ in self.design.groups
        ]

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def p(self) -> int:
        return self.design.p

    def cluster_scores(self, beta) -> np.ndarray:
        """Per-cluster score vectors, shape (n, p), cluster order as in data."""
        beta = np.ascontiguousarray(beta, dtype=float)
        terms, _ = self.design.prepared(self.family, beta)
        out = np.empty((self.n, self.p))
        for (m, idx, X, y), Gt, (a, rs) in zip(self.design.groups, self._gt, terms):
            t = np.einsum("gkl,gl->gk", Gt, rs)
            out[idx] = np.einsum("gkp,gk->gp", X, a * t)
        return out

    def cluster_score(self, i: int, beta) -> np.ndarray:
        """Score of a single cluster (direct small-matrix path)."""
        beta = np.asarray(beta, dtype=float)
        c = self.data.clusters[i]
        eta = c.X @ beta
        a = self.family.mean_deriv(eta) / np.sqrt(self.family.variance(eta))
        rs = (c.y - self.family.mean(eta)) / np.sqrt(self.family.variance(eta))
        return c.X.T @ (a * (self.weighted_inverses[i] @ rs))

    def q_n(self, beta) -> np.ndarray:
        """Average of the per-cluster scores (batched, no (n, p) temporary)."""
        beta = np.ascontiguousarray(beta, dtype=float)
        terms, _ = self.design.prepared(self.family, beta)
        q = np.zeros(self.p)
        for (m, idx, X, y), Gt, (a, rs) in zip(self.design.groups, self._gt, terms):
            t = np.einsum("gkl,gl->gk", Gt, rs)
            q += (a * t).reshape(-1) @ X.reshape(-1, self.p)
        return q / self.n

    def h_n(self, beta, S) -> np.ndarray:
        """Fisher-scoring matrix over the coordinates in ``S``."""
        beta = np.ascontiguousarray(beta, dtype=float)
        S = np.asarray(S, dtype=int)
        if S.size == 0:
            raise ValueError("S must be nonempty")
        terms, _ = self.design.prepared(self.family, beta)
        H = np.zeros((S.size, S.size))
        for (m, idx, X, y), Gt, (a, _) in zip(self.design.groups, self._gt, terms):
            A = a[:, :, None] * X[:, :, S]
            T = Gt @ A
            flat = A.reshape(-1, S.size)
            H += flat.T @ T.reshape(-1, S.size)
        return H / self.n

    def variance_floor_count(self, beta) -> int:
        """Floored variance entries when evaluating at ``beta``."""
        beta = np.ascontiguousarray(beta, dtype=float)
        return self.design.prepared(self.family, beta)[1]


def cluster_score(ctx: EquationContext, i: int, beta) -> np.ndarray:
    return ctx.cluster_score(i, beta)


def q_n(ctx: EquationContext, beta) -> np.ndarray:
    return ctx.q_n(beta)


def h_n(ctx: EquationContext, beta, S) -> np.ndarray:
    return ctx.h_n(beta, S)


def d_n(beta, S, penalty, c: float = D_N_OFFSET, exempt=()) -> np.ndarray:
    """Diagonal ridge rate(|beta_j|)/(c + |beta_j|) over ``S``.

    Coordinates listed in ``exempt`` get a zero entry (left unpenalized).
    """
    if c <= 0:
        raise ValueError("c must be positive")
    beta = np.asarray(beta, dtype=float)
    S = np.asarray(S, dtype=int)
    t = np.abs(beta[S])
    r = penalty.rate(t)
    exempt = set(int(j) for j in exempt)
    if exempt:
        mask = np.array([int(j) in exempt for j in S])
        r = np.where(mask, 0.0, r)
    return np.diag(r / (c + t))
