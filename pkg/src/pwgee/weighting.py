"""Cluster-size correction weights for the estimating equations.

When the outcome distribution depends on the cluster size, the ordinary
GEE score is biased.  Replacing each inverse working correlation G_i^-1 by
the elementwise product G_i^-1 o W_i restores a zero-mean score when

    W_i diagonal:      1 / sum_k g_kk            (same value for all k)
    W_i off-diagonal:  B_kl / sum_{k != l} g_kl  (B_kl random signs)

The signs B_kl are independent of the data, so the off-diagonal part has
conditional mean zero given the cluster size, and the diagonal part
normalizes away the size dependence of the trace.  Note the weighted
matrix is no longer the inverse of any correlation matrix.

Signs come from a counter-based keyed generator: each value is a pure
function of (seed, cluster index, row, col), so weight matrices are
reproducible across runs, platforms and parallel schedules, and stay fixed
through every iteration of a fit.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# off-diagonal sums below this are treated as exactly zero (independence)
OFFDIAG_EPS = 1e-12


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; modular uint64 wraparound is intended
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        return x ^ (x >> np.uint64(31))


class RademacherStream:
    """Reproducible +-1 draws keyed by (seed, cluster, row, col).

    ``draw(i, k, l)`` is symmetric in (k, l) so the weight matrices it
    fills stay symmetric.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def _keys(self, i, k, l) -> np.ndarray:
        i = np.asarray(i, dtype=np.uint64)
        k = np.asarray(k, dtype=np.uint64)
        l = np.asarray(l, dtype=np.uint64)
        lo = np.minimum(k, l)
        hi = np.maximum(k, l)
        h = _mix(np.asarray(self.seed, dtype=np.uint64))
        h = _mix(h ^ i)
        h = _mix(h ^ lo)
        return _mix(h ^ hi)

    def draw(self, i: int, k: int, l: int) -> int:
        """A single sign in {-1, +1}."""
        key = self._keys(np.uint64(i), np.uint64(k), np.uint64(l))
        return int(2 * int(key >> np.uint64(63)) - 1)

    def sign_matrix(self, i: int, m: int) -> np.ndarray:
        """Symmetric m x m matrix of signs for cluster ``i`` (diagonal +1)."""
        out = np.ones((m, m))
        if m >= 2:
            rows, cols = np.triu_indices(m, 1)
            keys = self._keys(np.full(rows.shape, i, dtype=np.uint64), rows, cols)
            signs = 2.0 * (keys >> np.uint64(63)).astype(float) - 1.0
            out[rows, cols] = signs
            out[cols, rows] = signs
        return out


def build_weight_matrix(
    ginv: np.ndarray, stream: RademacherStream, cluster_index: int
) -> np.ndarray:
    """The weight matrix W for one cluster from its inverse correlation.

    If the off-diagonal entries of ``ginv`` sum to (numerically) zero, as
    under independence, the off-diagonal weights are zero: the elementwise
    product vanishes there anyway and this keeps W well defined.
    """
    ginv = np.asarray(ginv, dtype=float)
    m = ginv.shape[0]
    diag_sum = float(np.trace(ginv))
    assert diag_sum > 0.0, "inverse correlation must have positive diagonal"
    W = np.zeros((m, m))
    np.fill_diagonal(W, 1.0 / diag_sum)
    if m >= 2:
        off_sum = float(ginv.sum() - np.trace(ginv))
        if abs(off_sum) >= OFFDIAG_EPS:
            B = stream.sign_matrix(cluster_index, m)
            off = B / off_sum
            np.fill_diagonal(off, 0.0)
            W += off
    return W


def weighted_inverse(ginv: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Elementwise product G^-1 o W used in place of G^-1."""
    ginv = np.asarray(ginv, dtype=float)
    W = np.asarray(W, dtype=float)
    if ginv.shape != W.shape:
        raise ValueError(f"shape mismatch {ginv.shape} vs {W.shape}")
    return ginv * W


def unweighted_mode(ginv: np.ndarray) -> np.ndarray:
    """Pass-through used to run the plain GEE/PGEE comparator."""
    return np.asarray(ginv, dtype=float)


def weighted_inverses_for(
    sizes, ginv_by_size: dict, stream: RademacherStream | None, weighting: bool
) -> list[np.ndarray]:
    """Per-cluster weighted (or plain) inverse correlation matrices.

    ``ginv_by_size`` maps cluster size to the shared inverse correlation;
    with weighting on, cluster ``i`` gets its own sign draws from ``stream``.
    """
    out = []
    for i, m in enumerate(sizes):
        ginv = ginv_by_size[int(m)]
        if weighting:
            out.append(weighted_inverse(ginv, build_weight_matrix(ginv, stream, i)))
        else:
            out.append(unweighted_mode(ginv))
    return out
