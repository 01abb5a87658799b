"""Synthetic longitudinal data generators for the four benchmark scenarios.

All four share the cluster-size law P(M=2)=9/16, P(M=4)=3/8, P(M=15)=1/16
and compound-symmetric covariates (mean 0, unit variance, pairwise
correlation 0.5).  Writing s(M) = 1(M > 4) - 1/16, which has mean zero:

    example 1: gaussian  Y = Xb * (1 - 1.5 s(M)) + eps      (size-dependent)
    example 3: gaussian  Y = Xb + eps                       (no size effect)
    example 2: poisson   E(Y|X,M) = exp(Xb) * (1 + 1.5|Xb| s(M))
    example 4: poisson   E(Y|X,M) = exp(Xb)

Because s(M) is centered, the marginal mean is Xb (resp. exp(Xb)) in every
case; examples 1 and 2 make the conditional mean depend on the cluster
size, which is what biases unweighted estimating equations.  Gaussian
errors are exchangeable with correlation 0.5; correlated poisson counts
come from a gaussian copula with exchangeable-0.5 latent correlation, so
the achieved count correlation is positive but not exactly 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import poisson as poisson_dist

from .dataset import ClusterData, LongitudinalDataset

CLUSTER_SIZES = (2, 4, 15)
CLUSTER_SIZE_PROBS = (9.0 / 16.0, 3.0 / 8.0, 1.0 / 16.0)

# centering constant: P(M = 15) = 1/16, so E[1(M > 4) - 1/16] = 0
SIZE_CENTERING = 1.0 / 16.0
SIZE_EFFECT = 1.5

LOG_ARG_FLOOR = 1e-8

_BETA_LINEAR = (2.0, -1.0, 1.0, -1.5)
_BETA_POISSON = (1.0, -0.8, 0.9, -1.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """One benchmark scenario: which example, dimensions and seed."""

    example: int
    n: int = 200
    p: int = 500
    rho_gen: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.example not in (1, 2, 3, 4):
            raise ValueError("example must be 1, 2, 3 or 4")
        if self.p < 4:
            raise ValueError("p must be at least 4")

    @property
    def beta_star(self) -> np.ndarray:
        head = _BETA_LINEAR if self.example in (1, 3) else _BETA_POISSON
        beta = np.zeros(self.p)
        beta[: len(head)] = head
        return beta

    @property
    def true_support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.beta_star != 0.0))

    @property
    def family_kind(self) -> str:
        return "gaussian" if self.example in (1, 3) else "poisson"


@dataclass
class SimDiagnostics:
    """Counters for rare numerical guards during generation."""

    n_log_arg_clamped: int = 0


def gen_cluster_size(rng: np.random.Generator) -> int:
    """One draw from the three-point cluster-size distribution."""
    return int(rng.choice(CLUSTER_SIZES, p=CLUSTER_SIZE_PROBS))


def gen_covariates(rng: np.random.Generator, m: int, p: int) -> np.ndarray:
    """m independent rows from N(0, 0.5*I + 0.5*J).

    Uses the closed-form square root a*I + b*J with a = sqrt(0.5) and
    b = (sqrt(0.5 + 0.5p) - sqrt(0.5)) / p applied to iid normals.
    """
    Z = rng.standard_normal((m, p))
    a = np.sqrt(0.5)
    b = (np.sqrt(0.5 + 0.5 * p) - a) / p
    return a * Z + b * Z.sum(axis=1, keepdims=True)


def _exchangeable_normal(rng: np.random.Generator, m: int, rho: float) -> np.ndarray:
    shared = rng.standard_normal()
    idio = rng.standard_normal(m)
    return np.sqrt(rho) * shared + np.sqrt(1.0 - rho) * idio


def linear_mean_multiplier(m: int, informative: bool) -> float:
    """Multiplier on Xb in the gaussian scenarios (1 if not informative)."""
    if not informative:
        return 1.0
    s = (1.0 if m > 4 else 0.0) - SIZE_CENTERING
    return 1.0 - SIZE_EFFECT * s


def poisson_mean_factor(
    xb: np.ndarray, m: int, informative: bool
) -> tuple[np.ndarray, int]:
    """Multiplier on exp(Xb) in the poisson scenarios, floored at 1e-8.

    The factor 1 + 1.5|Xb| s(M) can in principle go nonpositive for
    extreme |Xb| in small clusters; the floor keeps the log-mean defined
    and the clamp count is reported.
    """
    xb = np.asarray(xb, dtype=float)
    if not informative:
        return np.ones_like(xb), 0
    s = (1.0 if m > 4 else 0.0) - SIZE_CENTERING
    raw = 1.0 + SIZE_EFFECT * np.abs(xb) * s
    n_clamped = int(np.count_nonzero(raw < LOG_ARG_FLOOR))
    return np.maximum(raw, LOG_ARG_FLOOR), n_clamped


def gen_dataset_with_info(
    spec: ScenarioSpec,
) -> tuple[LongitudinalDataset, SimDiagnostics]:
    """Generate one dataset; output is a pure function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    beta = spec.beta_star
    informative = spec.example in (1, 2)
    diag = SimDiagnostics()
    clusters = []
    for i in range(spec.n):
        m = gen_cluster_size(rng)
        X = gen_covariates(rng, m, spec.p)
        xb = X @ beta
        if spec.example in (1, 3):
            mult = linear_mean_multiplier(m, informative)
            eps = _exchangeable_normal(rng, m, spec.rho_gen)
            y = xb * mult + eps
        else:
            factor, n_clamped = poisson_mean_factor(xb, m, informative)
            diag.n_log_arg_clamped += n_clamped
            mu = np.exp(xb) * factor
            z = _exchangeable_normal(rng, m, spec.rho_gen)
            u = np.clip(ndtr(z), 1e-12, 1.0 - 1e-12)
            y = poisson_dist.ppf(u, mu).astype(float)
        clusters.append(ClusterData(i, y, X))
    return LongitudinalDataset(tuple(clusters)), diag


def gen_dataset(spec: ScenarioSpec) -> LongitudinalDataset:
    return gen_dataset_with_info(spec)[0]


def gen_example1(spec: ScenarioSpec) -> LongitudinalDataset:
    """Gaussian responses whose conditional mean depends on cluster size."""
    return gen_dataset(ScenarioSpec(1, spec.n, spec.p, spec.rho_gen, spec.seed))


def gen_example2(spec: ScenarioSpec) -> LongitudinalDataset:
    """Correlated poisson responses with a size-dependent mean factor."""
    return gen_dataset(ScenarioSpec(2, spec.n, spec.p, spec.rho_gen, spec.seed))


def gen_example3(spec: ScenarioSpec) -> LongitudinalDataset:
    """Gaussian responses, cluster size carries no information."""
    return gen_dataset(ScenarioSpec(3, spec.n, spec.p, spec.rho_gen, spec.seed))


def gen_example4(spec: ScenarioSpec) -> LongitudinalDataset:
    """Correlated poisson responses, cluster size carries no information."""
    return gen_dataset(ScenarioSpec(4, spec.n, spec.p, spec.rho_gen, spec.seed))


def replicate_seed(master_seed: int, rep: int) -> int:
    """Derived dataset seed for replicate ``rep`` of a simulation run."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, int(rep)])
    return int(ss.generate_state(1, np.uint64)[0])
