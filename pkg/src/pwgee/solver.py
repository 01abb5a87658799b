"""Quasi-Newton solver for the (penalized) weighted estimating equations.

Each iteration, over the current active set S:

    1. rebuild the working correlation (re-estimating rho from the current
       Pearson residuals unless it is pinned); the random signs behind the
       weight matrices are drawn once per fit and never redrawn;
    2. form H_n(beta, S), D_n(beta, S) and Q_n(beta);
    3. update beta_S += (H_n + D_n)^-1 (Q_n - rate(|beta|) o sgn(beta))_S
       and pin beta to zero off S;
    4. refresh S as the union of three sets: coordinates whose aggregated
       score violates the zero-coordinate stationarity bound
       |Q_n(beta)_j| > lambda, coordinates with |beta_j| above the
       selection threshold, and penalty-exempt coordinates.  The score
       screen is recomputed over all coordinates, so dropped ones can
       re-enter;
    5. stop when the L1 change in beta is at most ``tol``.

Afterwards penalized coordinates smaller than the selection threshold are
hard-thresholded to exact zeros.  A fit with lambda = 0 disables both the
screen and the threshold and reduces to ordinary (W)GEE.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .correlation import WorkingCorrelationSpec, estimate_rho, inverse_correlation
from .dataset import LongitudinalDataset
from .equations import D_N_OFFSET, EquationContext, GroupedDesign, d_n
from .family import FamilySpec
from .penalty import PenaltySpec
from .weighting import RademacherStream, weighted_inverses_for

MAX_HALVINGS = 30


class FitError(RuntimeError):
    """Base class for solver failures."""


class SingularUpdateError(FitError):
    """H_n + D_n stayed singular even after the ridge retry."""


class DivergenceError(FitError):
    """The update could not be made finite by step halving."""


@dataclass(frozen=True)
class FitConfig:
    """Iteration controls; the tuning parameter itself lives on the penalty."""

    max_iter: int = 100
    tol: float = 1e-15
    zero_threshold: float = 1e-3
    penalty_exempt: tuple[int, ...] = ()
    init: np.ndarray | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.tol <= 0 or self.zero_threshold <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    active_set: tuple[int, ...]
    iterations: int
    converged: bool
    final_score_norm: float
    rho_hat: float | None
    lam: float
    n_variance_floor: int = 0
    n_step_halvings: int = 0


def _rate_signed(penalty: PenaltySpec, beta: np.ndarray, exempt: set) -> np.ndarray:
    """rate(|beta|) o sgn(beta) with exempt coordinates zeroed."""
    v = penalty.rate(np.abs(beta)) * np.sign(beta)
    for j in exempt:
        v[j] = 0.0
    return v


def _solve_system(H: np.ndarray, D: np.ndarray, g: np.ndarray) -> np.ndarray:
    M = H + D
    try:
        step = np.linalg.solve(M, g)
        if np.all(np.isfinite(step)):
            return step
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-8 * np.trace(H) / H.shape[0]
    try:
        step = np.linalg.solve(M + jitter * np.eye(H.shape[0]), g)
    except np.linalg.LinAlgError:
        raise SingularUpdateError("update system singular after ridge retry") from None
    if not np.all(np.isfinite(step)):
        raise SingularUpdateError("update system produced non-finite step")
    return step


class _ContextFactory:
    """Builds per-iteration equation contexts with draw-once sign matrices."""

    def __init__(self, data, family, corr_spec, weighting, seed):
        self.design = GroupedDesign(data)
        self.data = data
        self.family = family
        self.corr_spec = corr_spec
        self.weighting = weighting
        self.stream = RademacherStream(seed)
        self.sizes = data.sizes
        self._fixed_ctx = None

    def context(self, beta) -> tuple[EquationContext, float | None]:
        spec = self.corr_spec
        rho = None
        if spec.needs_rho():
            if spec.rho is not None:
                rho = float(spec.rho)
            else:
                rho = estimate_rho(self.data, beta, self.family, spec.kind)
            spec = replace(spec, rho=rho)
        elif self._fixed_ctx is not None:
            return self._fixed_ctx, None
        ginv_by_size = {
            int(m): inverse_correlation(spec, int(m)) for m in set(self.sizes)
        }
        inverses = weighted_inverses_for(
            self.sizes, ginv_by_size, self.stream, self.weighting
        )
        ctx = EquationContext(self.design, self.family, inverses)
        if not spec.needs_rho():
            self._fixed_ctx = ctx
        return ctx, rho


def fit_pwgee(
    data: LongitudinalDataset,
    family: FamilySpec,
    corr_spec: WorkingCorrelationSpec,
    penalty: PenaltySpec,
    config: FitConfig | None = None,
    weighting: bool = True,
    seed: int = 0,
) -> FitResult:
    """Fit the penalized weighted estimating equations.

    ``weighting=False`` runs the plain (P)GEE comparator through the same
    iteration machinery.  The returned coefficients are exactly zero off
    the active set.
    """
    config = config or FitConfig()
    family.validate_response(np.concatenate([c.y for c in data.clusters]))
    p = data.p
    exempt = set(int(j) for j in config.penalty_exempt)
    if not all(0 <= j < p for j in exempt):
        raise ValueError("penalty_exempt indices out of range")
    lam = penalty.lam
    screen_thresh = lam * penalty.rate_at_zero_plus() if lam > 0 else 0.0

    beta = (
        np.zeros(p)
        if config.init is None
        else np.asarray(config.init, dtype=float).copy()
    )
    if beta.shape != (p,):
        raise ValueError("init has wrong length")

    factory = _ContextFactory(data, family, corr_spec, weighting, seed)
    active = np.ones(p, dtype=bool)
    n_halvings = 0
    converged = False
    iterations = 0
    ctx, rho = factory.context(beta)
    Q = ctx.q_n(beta)
    n_floor = ctx.variance_floor_count(beta)

    for iterations in range(1, config.max_iter + 1):
        S = np.flatnonzero(active)
        if S.size == 0:
            converged = True
            break
        H = ctx.h_n(beta, S)
        D = d_n(beta, S, penalty, c=D_N_OFFSET, exempt=exempt)
        g = (Q - _rate_signed(penalty, beta, exempt))[S]
        step = _solve_system(H, D, g)

        for _ in range(MAX_HALVINGS + 1):
            beta_new = np.zeros(p)
            beta_new[S] = beta[S] + step
            ok = bool(np.all(np.isfinite(beta_new)))
            if ok:
                try:
                    ctx_new, rho_new = factory.context(beta_new)
                    Q_new = ctx_new.q_n(beta_new)
                    ok = bool(np.all(np.isfinite(Q_new)))
                except (ValueError, FloatingPointError):
                    ok = False
            if ok:
                break
            step *= 0.5
            n_halvings += 1
        else:
            raise DivergenceError(
                f"non-finite update after {MAX_HALVINGS} step halvings"
            )

        l1_change = float(np.abs(beta_new - beta).sum())
        beta, ctx, rho, Q = beta_new, ctx_new, rho_new, Q_new
        n_floor += ctx.variance_floor_count(beta)

        if lam > 0:
            active = np.abs(Q) > screen_thresh
            active |= np.abs(beta) > config.zero_threshold
            for j in exempt:
                active[j] = True
            beta[~active] = 0.0
        if l1_change <= config.tol:
            converged = True
            break

    if lam > 0:
        small = np.abs(beta) < config.zero_threshold
        for j in exempt:
            small[j] = False
        beta[small] = 0.0

    # certificate with the estimating function at the returned coefficients
    ctx, rho = factory.context(beta)
    Q_final = ctx.q_n(beta)
    v = _rate_signed(penalty, beta, exempt)
    zero_pen = (beta == 0.0) & np.array([j not in exempt for j in range(p)])
    v[zero_pen] = np.clip(Q_final[zero_pen], -screen_thresh, screen_thresh)
    final_norm = float(np.max(np.abs(Q_final - v))) if p else 0.0

    return FitResult(
        beta_hat=beta,
        active_set=tuple(int(j) for j in np.flatnonzero(beta != 0.0)),
        iterations=iterations,
        converged=converged,
        final_score_norm=final_norm,
        rho_hat=rho,
        lam=lam,
        n_variance_floor=n_floor,
        n_step_halvings=n_halvings,
    )


def fit_wgee_oracle(
    data: LongitudinalDataset,
    support,
    family: FamilySpec,
    corr_spec: WorkingCorrelationSpec,
    config: FitConfig | None = None,
    weighting: bool = True,
    seed: int = 0,
) -> FitResult:
    """Unpenalized fit on the given support, embedded back into p coordinates.

    This is the oracle benchmark: the estimating equations are solved on
    the restricted design with lambda = 0 using the same iteration
    machinery, and coordinates off ``support`` are exact zeros.
    """
    support = sorted(int(j) for j in support)
    if not support:
        raise ValueError("support must be nonempty")
    restricted = data.restrict_columns(support)
    config = config or FitConfig()
    sub = replace(config, penalty_exempt=(), init=None)
    res = fit_pwgee(
        restricted,
        family,
        corr_spec,
        PenaltySpec("scad", lam=0.0),
        config=sub,
        weighting=weighting,
        seed=seed,
    )
    beta = np.zeros(data.p)
    beta[support] = res.beta_hat
    return FitResult(
        beta_hat=beta,
        active_set=tuple(int(j) for j in np.flatnonzero(beta != 0.0)),
        iterations=res.iterations,
        converged=res.converged,
        final_score_norm=res.final_score_norm,
        rho_hat=res.rho_hat,
        lam=0.0,
        n_variance_floor=res.n_variance_floor,
        n_step_halvings=res.n_step_halvings,
    )
