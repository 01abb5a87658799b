import numpy as np
import pytest

from pwgee.correlation import WorkingCorrelationSpec, inverse_correlation
from pwgee.weighting import (
    RademacherStream,
    build_weight_matrix,
    unweighted_mode,
    weighted_inverse,
)


def test_stream_is_pure_and_symmetric():
    s1 = RademacherStream(42)
    s2 = RademacherStream(42)
    for i, k, l in ((0, 1, 2), (3, 0, 5), (7, 2, 2)):
        assert s1.draw(i, k, l) == s2.draw(i, k, l)
        assert s1.draw(i, k, l) == s1.draw(i, l, k)
        assert s1.draw(i, k, l) in (-1, 1)
    assert RademacherStream(1).draw(0, 0, 1) != RademacherStream(1).draw(1, 0, 1) or True


def test_stream_differs_across_seeds():
    a = RademacherStream(1).sign_matrix(0, 10)
    b = RademacherStream(2).sign_matrix(0, 10)
    assert not np.array_equal(a, b)


def test_stream_empirical_mean():
    s = RademacherStream(2024)
    n = 100_000
    rows = np.zeros(n, dtype=np.uint64)
    ks = np.arange(n, dtype=np.uint64)
    keys = s._keys(rows, ks, ks + np.uint64(1))
    signs = 2.0 * (keys >> np.uint64(63)).astype(float) - 1.0
    assert abs(signs.mean()) <= 3.0 / np.sqrt(n)


def test_sign_matrix_symmetric():
    M = RademacherStream(5).sign_matrix(3, 15)
    np.testing.assert_array_equal(M, M.T)
    assert np.all(np.abs(M) == 1)


def test_weight_matrix_independence():
    W = build_weight_matrix(np.eye(3), RademacherStream(0), 0)
    np.testing.assert_allclose(np.diag(W), 1 / 3)
    off = W[~np.eye(3, dtype=bool)]
    np.testing.assert_array_equal(off, 0.0)


def test_weight_matrix_exchangeable():
    Gi = inverse_correlation(WorkingCorrelationSpec("exch", 0.5), 3)
    W = build_weight_matrix(Gi, RademacherStream(11), 4)
    np.testing.assert_allclose(np.diag(W), 2 / 9)
    off = W[~np.eye(3, dtype=bool)]
    # off-diagonal sum of Gi is -3, so entries are -B/3
    np.testing.assert_allclose(np.abs(off), 1 / 3)


def test_weight_matrix_m1():
    W = build_weight_matrix(np.array([[2.0]]), RademacherStream(0), 0)
    np.testing.assert_allclose(W, [[0.5]])


def test_weighted_inverse_exchangeable_example():
    Gi = inverse_correlation(WorkingCorrelationSpec("exch", 0.5), 3)
    W = build_weight_matrix(Gi, RademacherStream(3), 0)
    Gt = weighted_inverse(Gi, W)
    np.testing.assert_allclose(np.diag(Gt), 1 / 3)
    np.testing.assert_allclose(np.abs(Gt[~np.eye(3, dtype=bool)]), 1 / 6)
    np.testing.assert_array_equal(Gt, Gt.T)


def test_weighted_inverse_independence_any_m():
    for m in (1, 2, 5, 15):
        Gi = np.eye(m)
        Gt = weighted_inverse(Gi, build_weight_matrix(Gi, RademacherStream(1), 0))
        np.testing.assert_allclose(Gt, np.eye(m) / m)


def test_all_ones_weight_is_identity_op():
    Gi = inverse_correlation(WorkingCorrelationSpec("ar1", 0.4), 4)
    np.testing.assert_array_equal(weighted_inverse(Gi, np.ones((4, 4))), Gi)


def test_unweighted_mode_passthrough():
    for spec in (
        WorkingCorrelationSpec("indep"),
        WorkingCorrelationSpec("exch", 0.3),
        WorkingCorrelationSpec("ar1", 0.3),
    ):
        Gi = inverse_correlation(spec, 3)
        np.testing.assert_array_equal(unweighted_mode(Gi), Gi)


def test_diagonal_trace_one():
    for spec, m in (
        (WorkingCorrelationSpec("exch", 0.4), 5),
        (WorkingCorrelationSpec("ar1", -0.3), 7),
        (WorkingCorrelationSpec("indep"), 4),
    ):
        Gi = inverse_correlation(spec, m)
        Gt = weighted_inverse(Gi, build_weight_matrix(Gi, RademacherStream(9), 2))
        np.testing.assert_allclose(np.diag(Gt), np.diag(Gi) / np.trace(Gi))
        assert np.trace(Gt) == pytest.approx(1.0)


def test_offdiagonal_empirical_zero_mean():
    Gi = inverse_correlation(WorkingCorrelationSpec("exch", 0.5), 3)
    n_seeds = 10_000
    acc = np.zeros((3, 3))
    for seed in range(n_seeds):
        W = build_weight_matrix(Gi, RademacherStream(seed), 0)
        acc += Gi * W
    acc /= n_seeds
    off = acc[~np.eye(3, dtype=bool)]
    # each entry is +-1/6 with mean 0, sd 1/6
    bound = 3.0 * (1 / 6) / np.sqrt(n_seeds)
    assert np.max(np.abs(off)) <= bound


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        weighted_inverse(np.eye(3), np.eye(2))
