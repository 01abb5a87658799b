"""Clustered longitudinal data model and long-format CSV ingestion.

A dataset is an ordered collection of clusters; observations within a
cluster are correlated while clusters are mutually independent.  Row order
within a cluster is preserved because serial working correlation (AR(1))
depends on it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import pandas as pd


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ClusterData:
    """One cluster: response vector ``y`` and covariate matrix ``X``.

    ``X`` has one row per observation with the same columns across all
    clusters of a dataset.  Instances are immutable and safe to share
    across workers.
    """

    cluster_id: object
    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen(np.atleast_1d(self.y)))
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        object.__setattr__(self, "X", _frozen(X))
        if self.y.ndim != 1 or self.X.ndim != 2:
            raise ValueError("y must be a vector and X a matrix")
        if self.m < 1:
            raise ValueError("cluster size must be at least 1")
        if self.X.shape[0] != self.m:
            raise ValueError(
                f"cluster {self.cluster_id!r}: X has {self.X.shape[0]} rows "
                f"but y has length {self.m}"
            )

    @property
    def m(self) -> int:
        """Cluster size (number of observations)."""
        return self.y.shape[0]


@dataclass(frozen=True)
class LongitudinalDataset:
    """Immutable ordered collection of clusters with a common design width."""

    clusters: tuple[ClusterData, ...]
    covariate_names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if self.n < 2:
            raise ValueError("a dataset needs at least two clusters")
        p = self.clusters[0].X.shape[1]
        for c in self.clusters:
            if c.X.shape[1] != p:
                raise ValueError(
                    f"cluster {c.cluster_id!r} has {c.X.shape[1]} covariate "
                    f"columns, expected {p}"
                )
        ids = [c.cluster_id for c in self.clusters]
        if len(set(ids)) != len(ids):
            raise ValueError("cluster ids are not unique")
        if self.covariate_names is not None:
            names = tuple(self.covariate_names)
            if len(names) != p:
                raise ValueError("covariate_names length does not match p")
            object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return len(self.clusters)

    @property
    def p(self) -> int:
        return self.clusters[0].X.shape[1]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([c.m for c in self.clusters], dtype=int)

    @property
    def total_obs(self) -> int:
        return int(self.sizes.sum())

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All responses and covariate rows, clusters concatenated in order."""
        y = np.concatenate([c.y for c in self.clusters])
        X = np.vstack([c.X for c in self.clusters])
        return y, X

    def subset(self, indices) -> "LongitudinalDataset":
        """New dataset from the clusters at ``indices`` (order preserved)."""
        picked = tuple(self.clusters[int(i)] for i in indices)
        return LongitudinalDataset(picked, self.covariate_names)

    def restrict_columns(self, columns) -> "LongitudinalDataset":
        """New dataset keeping only the covariate columns in ``columns``."""
        cols = np.asarray(list(columns), dtype=int)
        names = None
        if self.covariate_names is not None:
            names = tuple(self.covariate_names[j] for j in cols)
        picked = tuple(
            ClusterData(c.cluster_id, c.y, c.X[:, cols]) for c in self.clusters
        )
        return LongitudinalDataset(picked, names)

    def content_hash(self) -> str:
        """Stable digest of ids, responses and covariates."""
        h = hashlib.blake2b(digest_size=16)
        for c in self.clusters:
            h.update(repr(c.cluster_id).encode())
            h.update(np.ascontiguousarray(c.y).tobytes())
            h.update(np.ascontiguousarray(c.X).tobytes())
        return h.hexdigest()


def load_long_csv(
    path,
    response_column: str,
    cluster_column: str,
    covariate_columns="all-remaining",
) -> LongitudinalDataset:
    """Read a long-format CSV (one observation per row) into a dataset.

    Rows sharing a cluster id are grouped (they need not be contiguous);
    within a cluster the file row order is kept.  Covariate and response
    cells must parse as numbers; the cluster id may be integer or string.

    Parameters
    ----------
    path : str or file-like
        CSV with a header row, comma separated, '.' decimal point.
    response_column, cluster_column : str
        Column names for the response and the cluster id.
    covariate_columns : list of str or "all-remaining"
        Explicit covariate columns, or every column that is neither the
        response nor the cluster id.
    """
    try:
        frame = pd.read_csv(path, keep_default_na=False, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise ValueError("empty file") from None
    if frame.shape[0] == 0:
        raise ValueError("empty file")
    for name in (response_column, cluster_column):
        if name not in frame.columns:
            raise ValueError(f"missing column {name!r}")
    if covariate_columns == "all-remaining":
        covariate_columns = [
            c for c in frame.columns if c not in (response_column, cluster_column)
        ]
    else:
        covariate_columns = list(covariate_columns)
        for name in covariate_columns:
            if name not in frame.columns:
                raise ValueError(f"missing column {name!r}")
    if not covariate_columns:
        raise ValueError("no covariate columns")

    numeric = {}
    for name in [response_column] + covariate_columns:
        col = pd.to_numeric(frame[name], errors="coerce")
        if col.isna().any():
            row = int(col.isna().idxmax())
            raise ValueError(
                f"non-numeric cell in column {name!r} at data row {row}"
            )
        numeric[name] = col.to_numpy(dtype=float)

    y = numeric[response_column]
    X = np.column_stack([numeric[name] for name in covariate_columns])
    ids = frame[cluster_column].to_numpy()

    clusters = []
    # stable grouping by first appearance keeps file row order within ids
    order = {}
    for row, cid in enumerate(ids):
        order.setdefault(cid, []).append(row)
    for cid, rows in order.items():
        rows = np.asarray(rows, dtype=int)
        clusters.append(ClusterData(cid, y[rows], X[rows]))
    return LongitudinalDataset(tuple(clusters), tuple(covariate_columns))


def write_long_csv(
    data: LongitudinalDataset,
    path,
    response_column: str = "y",
    cluster_column: str = "cluster",
) -> None:
    """Write ``data`` in the long format accepted by :func:`load_long_csv`.

    Floats are printed with 17 significant digits so a write/load round
    trip is exact.
    """
    names = data.covariate_names or tuple(f"x{j + 1}" for j in range(data.p))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([cluster_column, response_column, *names]) + "\n")
        for c in data.clusters:
            for j in range(c.m):
                cells = [str(c.cluster_id), f"{c.y[j]:.17g}"]
                cells.extend(f"{v:.17g}" for v in c.X[j])
                fh.write(",".join(cells) + "\n")


def standardize_covariates(
    data: LongitudinalDataset,
) -> tuple[LongitudinalDataset, np.ndarray, np.ndarray]:
    """Center and scale every covariate column to pooled mean 0, sd 1.

    The sample standard deviation (denominator N-1, N = total observations)
    is used.  Returns the transformed dataset together with the column
    means and sds needed to map coefficients back to the original scale.
    """
    _, X = data.stacked()
    means = X.mean(axis=0)
    sds = X.std(axis=0, ddof=1)
    bad = np.flatnonzero(sds <= 0.0)
    if bad.size:
        names = data.covariate_names or tuple(f"x{j + 1}" for j in range(data.p))
        raise ValueError(f"zero-variance column {names[bad[0]]!r}")
    clusters = tuple(
        ClusterData(c.cluster_id, c.y, (c.X - means) / sds) for c in data.clusters
    )
    return LongitudinalDataset(clusters, data.covariate_names), means, sds
