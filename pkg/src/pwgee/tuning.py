"""Fourfold cross-validation over a descending lambda grid.

Folds split whole clusters, never observations.  The held-out loss treats
held-out observations as independent: squared error for the gaussian
family, -2 log-likelihood for poisson and binomial.  Ties in the summed
loss break toward the larger lambda (the sparser model).

When the estimator runs with the cluster-size correction on, each
held-out cluster's loss is averaged over its observations (weight 1/M_i)
before summing.  Without this, large clusters dominate the criterion and,
when the outcome depends on cluster size, the per-observation loss is
minimized by the very coefficient attenuation the weighting removes, so
cross-validation would drag lambda toward biased fits.  Cluster-equal
weighting restores a criterion whose optimum is the marginal-mean
coefficient vector.  The unweighted comparator keeps the plain
per-observation sum.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .correlation import WorkingCorrelationSpec
from .dataset import LongitudinalDataset
from .equations import EquationContext
from .family import FamilySpec
from .penalty import PenaltySpec
from .solver import FitConfig, FitError, fit_pwgee
from .weighting import RademacherStream, weighted_inverses_for
from .correlation import estimate_rho, inverse_correlation

N_FOLDS = 4


def _derive_seed(*parts) -> int:
    ss = np.random.SeedSequence([int(x) & 0xFFFFFFFF for x in parts])
    return int(ss.generate_state(1, np.uint64)[0])


def make_folds(n: int, seed: int) -> list[np.ndarray]:
    """Four near-equal cluster-index folds from a seeded shuffle."""
    if n < N_FOLDS:
        raise ValueError(f"need at least {N_FOLDS} clusters, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    return [np.sort(order[f::N_FOLDS]) for f in range(N_FOLDS)]


def holdout_loss(
    family: FamilySpec, y: np.ndarray, eta: np.ndarray, per_cluster: bool = False
) -> float:
    """Independence prediction loss for one held-out cluster.

    ``per_cluster=True`` averages over the cluster's observations, giving
    every cluster equal weight in the summed criterion.
    """
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if family.kind == "gaussian":
        loss = float(np.sum((y - eta) ** 2))
    elif family.kind == "poisson":
        with np.errstate(over="ignore"):
            ll = y * eta - np.exp(eta) - gammaln(y + 1.0)
        loss = float(-2.0 * np.sum(ll))
    else:
        ll = y * eta - np.logaddexp(0.0, eta)
        loss = float(-2.0 * np.sum(ll))
    return loss / y.size if per_cluster else loss


def default_lambda_grid(
    data: LongitudinalDataset,
    family: FamilySpec,
    corr_spec: WorkingCorrelationSpec,
    weighting: bool = True,
    seed: int = 0,
    size: int = 25,
    min_ratio: float = 0.01,
    penalty_exempt=(),
) -> np.ndarray:
    """Log-spaced grid from lambda_max down to min_ratio * lambda_max.

    lambda_max is the smallest lambda at which the score screen at beta = 0
    drops every penalized coordinate.
    """
    beta0 = np.zeros(data.p)
    spec = corr_spec
    if spec.needs_rho() and spec.rho is None:
        spec = replace(spec, rho=estimate_rho(data, beta0, family, spec.kind))
    ginv_by_size = {int(m): inverse_correlation(spec, int(m)) for m in set(data.sizes)}
    stream = RademacherStream(seed)
    inverses = weighted_inverses_for(data.sizes, ginv_by_size, stream, weighting)
    ctx = EquationContext(data, family, inverses)
    mean_abs = np.abs(ctx.cluster_scores(beta0)).mean(axis=0)
    penalized = np.ones(data.p, dtype=bool)
    for j in penalty_exempt:
        penalized[int(j)] = False
    if not penalized.any():
        raise ValueError("no penalized coordinates to build a grid for")
    lam_max = float(mean_abs[penalized].max())
    lam_max = max(lam_max, 1e-8)
    return np.geomspace(lam_max, min_ratio * lam_max, size)


@dataclass(frozen=True)
class CvResult:
    lambda_star: float
    lambdas: np.ndarray
    total_loss: np.ndarray
    loss_se: np.ndarray
    curve: list  # (lambda, fold, loss) rows


def fit_fold(
    data: LongitudinalDataset,
    train_idx,
    family: FamilySpec,
    corr_spec: WorkingCorrelationSpec,
    penalty: PenaltySpec,
    config: FitConfig,
    seed: int,
    weighting: bool,
):
    """Fit on the clusters in ``train_idx`` only; held-out rows never enter."""
    train = data.subset(np.sort(np.asarray(train_idx, dtype=int)))
    return fit_pwgee(
        train, family, corr_spec, penalty, config=config, weighting=weighting, seed=seed
    )


def cv_select(
    data: LongitudinalDataset,
    family: FamilySpec,
    corr_spec: WorkingCorrelationSpec,
    penalty: PenaltySpec,
    grid=None,
    config: FitConfig | None = None,
    seed: int = 0,
    weighting: bool = True,
    rule: str = "1se",
) -> CvResult:
    """Pick lambda by fourfold cross-validation.

    Each (fold, lambda) training fit is an independent estimator instance:
    its weight signs are seeded from (seed, fold, lambda index).  A fit
    failure contributes an infinite loss for that lambda.

    ``rule="argmin"`` takes the smallest summed loss (exact ties toward
    larger lambda).  The default ``"1se"`` takes the largest lambda whose
    loss exceeds the minimum by less than one standard error of the
    fold-paired loss difference: folded-concave fits are identical across
    a stretch of lambda (strong signals escape shrinkage entirely), so
    the loss curve has a plateau whose argmin is decided by noise far
    below fold-level variation, and the sparser end of the plateau is the
    defensible choice.  Pairing by fold keeps the rule sharp: systematic
    loss increases (over-shrinkage) appear in every fold and are
    rejected even when fold totals are themselves noisy.
    """
    if rule not in ("argmin", "1se"):
        raise ValueError("rule must be 'argmin' or '1se'")
    config = config or FitConfig()
    if grid is None:
        grid = default_lambda_grid(
            data,
            family,
            corr_spec,
            weighting=weighting,
            seed=seed,
            penalty_exempt=config.penalty_exempt,
        )
    grid = np.sort(np.asarray(grid, dtype=float))[::-1]
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    folds = make_folds(data.n, seed)
    all_idx = np.arange(data.n)

    curve = []
    total = np.zeros(grid.size)
    fold_losses = np.zeros((grid.size, N_FOLDS))
    for li, lam in enumerate(grid):
        pen = replace(penalty, lam=float(lam))
        for f, held in enumerate(folds):
            train_idx = np.setdiff1d(all_idx, held)
            fold_seed = _derive_seed(seed, f, li)
            try:
                res = fit_fold(
                    data, train_idx, family, corr_spec, pen, config, fold_seed,
                    weighting,
                )
                loss = 0.0
                for i in held:
                    c = data.clusters[int(i)]
                    loss += holdout_loss(
                        family, c.y, c.X @ res.beta_hat, per_cluster=weighting
                    )
            except FitError:
                loss = np.inf
            curve.append((float(lam), f, float(loss)))
            fold_losses[li, f] = loss
            total[li] += loss

    best = 0
    for li in range(1, grid.size):
        if total[li] < total[best]:
            best = li
    # standard error of the loss difference to the minimizer, paired by fold
    with np.errstate(invalid="ignore"):
        diffs = fold_losses - fold_losses[best]
        se = np.where(
            np.isfinite(total),
            np.nan_to_num(diffs.std(axis=1, ddof=1), nan=np.inf) * np.sqrt(N_FOLDS),
            np.inf,
        )
    if rule == "1se" and np.isfinite(total[best]):
        for li in range(grid.size):
            if np.isfinite(total[li]) and total[li] - total[best] <= se[li]:
                best = li  # grid is descending: first hit is the largest lambda
                break
    return CvResult(
        lambda_star=float(grid[best]),
        lambdas=grid,
        total_loss=total,
        loss_se=se,
        curve=curve,
    )
