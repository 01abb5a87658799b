import numpy as np
import pytest

from pwgee.correlation import WorkingCorrelationSpec, inverse_correlation
from pwgee.dataset import ClusterData, LongitudinalDataset
from pwgee.equations import D_N_OFFSET, EquationContext, d_n
from pwgee.family import BINOMIAL, GAUSSIAN, POISSON
from pwgee.penalty import PenaltySpec
from pwgee.weighting import RademacherStream, build_weight_matrix, weighted_inverse


def _pair_dataset(rng, p=3, sizes=(2, 3)):
    clusters = [
        ClusterData(i, rng.standard_normal(m), rng.standard_normal((m, p)))
        for i, m in enumerate(sizes)
    ]
    return LongitudinalDataset(tuple(clusters))


def _ctx(data, family, weighting=False, seed=0, spec=None):
    spec = spec or WorkingCorrelationSpec("indep")
    stream = RademacherStream(seed)
    inverses = []
    for i, c in enumerate(data.clusters):
        gi = inverse_correlation(spec, c.m)
        if weighting:
            gi = weighted_inverse(gi, build_weight_matrix(gi, stream, i))
        inverses.append(gi)
    return EquationContext(data, family, inverses)


def test_zero_residual_zero_score():
    rng = np.random.default_rng(0)
    data = _pair_dataset(rng)
    beta = rng.standard_normal(3)
    clusters = [
        ClusterData(c.cluster_id, c.X @ beta, c.X) for c in data.clusters
    ]
    ctx = _ctx(LongitudinalDataset(tuple(clusters)), GAUSSIAN)
    np.testing.assert_allclose(ctx.q_n(beta), 0.0, atol=1e-12)
    np.testing.assert_allclose(ctx.cluster_score(0, beta), 0.0, atol=1e-12)


def test_gaussian_single_cluster_formula():
    rng = np.random.default_rng(1)
    m, p = 4, 3
    X = rng.standard_normal((m, p))
    y = rng.standard_normal(m)
    data = LongitudinalDataset(
        (ClusterData(0, y, X), ClusterData(1, y, X))
    )
    inverses = [np.eye(m) / m, np.eye(m) / m]
    ctx = EquationContext(data, GAUSSIAN, inverses)
    beta = rng.standard_normal(p)
    expected = X.T @ (y - X @ beta) / m
    np.testing.assert_allclose(ctx.cluster_score(0, beta), expected, atol=1e-12)


def test_m1_scalar_reduction():
    x = np.array([[2.0, -1.0]])
    data = LongitudinalDataset(
        (ClusterData(0, [3.0], x), ClusterData(1, [1.0], x))
    )
    beta = np.array([0.5, 0.2])
    eta = (x @ beta).item()
    for fam in (GAUSSIAN, POISSON):
        ctx = EquationContext(data, fam, [np.eye(1), np.eye(1)])
        mu, d, phi = fam.mean(eta), fam.mean_deriv(eta), fam.variance(eta)
        expected = x[0] * d / phi * (3.0 - mu)
        np.testing.assert_allclose(ctx.cluster_score(0, beta), expected, rtol=1e-12)


def test_qn_matches_cluster_scores():
    rng = np.random.default_rng(2)
    data = _pair_dataset(rng, p=4, sizes=(2, 3, 2, 5))
    ctx = _ctx(data, GAUSSIAN, weighting=True, seed=3)
    beta = rng.standard_normal(4)
    scores = ctx.cluster_scores(beta)
    np.testing.assert_allclose(ctx.q_n(beta), scores.mean(axis=0), atol=1e-13)
    for i in range(data.n):
        np.testing.assert_allclose(scores[i], ctx.cluster_score(i, beta), atol=1e-12)


def test_qn_replication_invariance():
    rng = np.random.default_rng(3)
    data = _pair_dataset(rng, p=3, sizes=(2, 4))
    beta = rng.standard_normal(3)
    ctx = _ctx(data, GAUSSIAN)
    doubled = LongitudinalDataset(
        tuple(
            ClusterData(i, c.y, c.X)
            for i, c in enumerate(list(data.clusters) + list(data.clusters))
        )
    )
    ctx2 = _ctx(doubled, GAUSSIAN)
    np.testing.assert_allclose(ctx.q_n(beta), ctx2.q_n(beta), atol=1e-12)


def test_hn_gaussian_gram():
    rng = np.random.default_rng(4)
    m, p = 3, 4
    X1 = rng.standard_normal((m, p))
    X2 = rng.standard_normal((m, p))
    y = rng.standard_normal(m)
    data = LongitudinalDataset((ClusterData(0, y, X1), ClusterData(1, y, X2)))
    # weighting off, independence, gaussian: H is the averaged gram matrix
    ctx = EquationContext(data, GAUSSIAN, [np.eye(m), np.eye(m)])
    S = np.arange(p)
    expected = (X1.T @ X1 + X2.T @ X2) / 2
    np.testing.assert_allclose(ctx.h_n(np.zeros(p), S), expected, atol=1e-12)
    # with the 1/m weighted inverse, each gram is scaled by 1/m
    ctx2 = EquationContext(data, GAUSSIAN, [np.eye(m) / m, np.eye(m) / m])
    np.testing.assert_allclose(ctx2.h_n(np.zeros(p), S), expected / m, atol=1e-12)


def test_hn_singleton_matches_quadratic_form():
    rng = np.random.default_rng(5)
    data = _pair_dataset(rng, p=4, sizes=(3, 2))
    ctx = _ctx(data, POISSON, weighting=True, seed=1)
    beta = rng.standard_normal(4) * 0.3
    j = 2
    H = ctx.h_n(beta, [j])
    total = 0.0
    for i, c in enumerate(data.clusters):
        eta = c.X @ beta
        a = POISSON.mean_deriv(eta) / np.sqrt(POISSON.variance(eta))
        v = a * c.X[:, j]
        total += v @ ctx.weighted_inverses[i] @ v
    np.testing.assert_allclose(H, [[total / data.n]], rtol=1e-12)


def test_hn_symmetric():
    rng = np.random.default_rng(6)
    data = _pair_dataset(rng, p=5, sizes=(4, 3, 2))
    ctx = _ctx(data, BINOMIAL, weighting=True, seed=2)
    beta = rng.standard_normal(5) * 0.2
    H = ctx.h_n(beta, np.arange(5))
    np.testing.assert_allclose(H, H.T, atol=1e-12)


def test_dn_values():
    pen = PenaltySpec("scad", lam=0.5, a=3.7)
    beta = np.array([5.0, 0.0, 1.0])
    D = d_n(beta, [0, 1, 2], pen)
    assert D[0, 0] == 0.0
    assert D[1, 1] == pytest.approx(0.5 / D_N_OFFSET)
    assert D[2, 2] == pytest.approx(pen.rate(1.0) / (D_N_OFFSET + 1.0))
    lasso = PenaltySpec("lasso", lam=0.5)
    D2 = d_n(np.array([1.0]), [0], lasso)
    assert D2[0, 0] == pytest.approx(0.5 / 1.000001, rel=1e-9)


def test_dn_exempt_and_validation():
    pen = PenaltySpec("scad", lam=0.5)
    D = d_n(np.zeros(2), [0, 1], pen, exempt=(1,))
    assert D[1, 1] == 0.0
    with pytest.raises(ValueError):
        d_n(np.zeros(2), [0], pen, c=0.0)


def test_permutation_equivariance():
    rng = np.random.default_rng(7)
    data = _pair_dataset(rng, p=4, sizes=(3, 2))
    beta = rng.standard_normal(4)
    perm = np.array([2, 0, 3, 1])
    permuted = LongitudinalDataset(
        tuple(ClusterData(c.cluster_id, c.y, c.X[:, perm]) for c in data.clusters)
    )
    ctx = _ctx(data, GAUSSIAN)
    ctx_p = _ctx(permuted, GAUSSIAN)
    q = ctx.q_n(beta)
    q_p = ctx_p.q_n(beta[perm])
    np.testing.assert_allclose(q_p, q[perm], atol=1e-12)


def test_gaussian_exactness_small():
    # Q_n is the negative gradient of the weighted quadratic objective
    rng = np.random.default_rng(8)
    data = _pair_dataset(rng, p=3, sizes=(2, 3, 4))
    ctx = _ctx(data, GAUSSIAN, weighting=True, seed=5, spec=WorkingCorrelationSpec("exch", 0.4))
    beta = rng.standard_normal(3)

    def objective(b):
        total = 0.0
        for i, c in enumerate(data.clusters):
            r = c.y - c.X @ b
            total += r @ ctx.weighted_inverses[i] @ r
        return total / (2 * data.n)

    h = 1e-6
    grad_fd = np.zeros(3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        grad_fd[j] = (objective(beta + e) - objective(beta - e)) / (2 * h)
    np.testing.assert_allclose(ctx.q_n(beta), -grad_fd, rtol=1e-6, atol=1e-9)


def test_context_shape_validation():
    rng = np.random.default_rng(9)
    data = _pair_dataset(rng, p=2, sizes=(2, 3))
    with pytest.raises(ValueError):
        EquationContext(data, GAUSSIAN, [np.eye(2)])
    with pytest.raises(ValueError):
        EquationContext(data, GAUSSIAN, [np.eye(2), np.eye(2)])
