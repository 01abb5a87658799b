import numpy as np
import pytest

from pwgee.correlation import (
    WorkingCorrelationSpec,
    build_correlation,
    estimate_rho,
    inverse_correlation,
    invert_correlation,
)
from pwgee.dataset import ClusterData, LongitudinalDataset
from pwgee.family import GAUSSIAN


def test_build_independence():
    spec = WorkingCorrelationSpec("indep")
    np.testing.assert_array_equal(build_correlation(spec, 3), np.eye(3))


def test_build_exchangeable():
    G = build_correlation(WorkingCorrelationSpec("exch", 0.5), 3)
    expected = np.array([[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]])
    np.testing.assert_array_equal(G, expected)


def test_build_ar1():
    G = build_correlation(WorkingCorrelationSpec("ar1", 0.5), 3)
    expected = np.array([[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]])
    np.testing.assert_allclose(G, expected, atol=1e-15)


def test_invert_identity():
    np.testing.assert_array_equal(invert_correlation(np.eye(3)), np.eye(3))


def test_invert_exchangeable_closed_form():
    spec = WorkingCorrelationSpec("exch", 0.5)
    Gi = inverse_correlation(spec, 3)
    np.testing.assert_allclose(np.diag(Gi), [1.5, 1.5, 1.5], atol=1e-12)
    off = Gi[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, -0.5, atol=1e-12)


def test_invert_ar1_closed_form():
    spec = WorkingCorrelationSpec("ar1", 0.5)
    Gi = inverse_correlation(spec, 3)
    np.testing.assert_allclose(np.diag(Gi), [4 / 3, 5 / 3, 4 / 3], atol=1e-12)
    assert Gi[0, 1] == pytest.approx(-2 / 3)
    assert Gi[0, 2] == pytest.approx(0.0, abs=1e-15)


def test_build_invert_identity_grid():
    for kind in ("independence", "exchangeable", "ar1"):
        for m in range(1, 16):
            for rho in (-0.3, 0.0, 0.3, 0.5, 0.9):
                if kind == "independence":
                    spec = WorkingCorrelationSpec(kind)
                else:
                    if kind == "exchangeable" and m >= 2 and rho <= -1.0 / (m - 1):
                        continue
                    spec = WorkingCorrelationSpec(kind, rho)
                G = build_correlation(spec, m)
                Gi = invert_correlation(G, spec)
                np.testing.assert_allclose(G @ Gi, np.eye(m), atol=1e-10)
                # generic SPD path agrees with the closed form
                np.testing.assert_allclose(invert_correlation(G), Gi, atol=1e-8)
                if kind == "independence":
                    break


def test_invalid_rho_rejected():
    with pytest.raises(ValueError):
        build_correlation(WorkingCorrelationSpec("exch", -0.6), 3)
    with pytest.raises(ValueError):
        build_correlation(WorkingCorrelationSpec("ar1", 1.2), 3)


def test_non_pd_reports_eigenvalue():
    bad = np.array([[1.0, 0.9, 0.1], [0.9, 1.0, 0.9], [0.1, 0.9, 1.0]])
    with pytest.raises(ValueError, match="smallest eigenvalue"):
        invert_correlation(bad)


def _dataset_from_residuals(res_list):
    # gaussian family with beta = 0 makes pearson residuals equal y
    clusters = [
        ClusterData(i, r, np.zeros((len(r), 1))) for i, r in enumerate(res_list)
    ]
    return LongitudinalDataset(tuple(clusters))


def test_estimate_rho_zero_residuals():
    data = _dataset_from_residuals([np.zeros(3), np.zeros(2)])
    rho = estimate_rho(data, np.zeros(1), GAUSSIAN, "exchangeable")
    assert rho == 0.0


def test_estimate_rho_perfect_correlation_clamps():
    data = _dataset_from_residuals([np.full(4, 1.3), np.full(3, -0.7), np.full(4, 2.0)])
    rho = estimate_rho(data, np.zeros(1), GAUSSIAN, "exchangeable")
    assert rho == pytest.approx(1 - 1e-6)
    rho1 = estimate_rho(data, np.zeros(1), GAUSSIAN, "ar1")
    assert rho1 == pytest.approx(1 - 1e-6)


def test_estimate_rho_monte_carlo():
    rng = np.random.default_rng(123)
    res = []
    for _ in range(2000):
        shared = rng.standard_normal()
        res.append(np.sqrt(0.5) * shared + np.sqrt(0.5) * rng.standard_normal(4))
    data = _dataset_from_residuals(res)
    rho = estimate_rho(data, np.zeros(1), GAUSSIAN, "exchangeable")
    assert 0.45 <= rho <= 0.55


def test_estimate_rho_order_invariant():
    rng = np.random.default_rng(9)
    res = [rng.standard_normal(int(m)) for m in rng.integers(1, 5, size=40)]
    d1 = _dataset_from_residuals(res)
    d2 = _dataset_from_residuals(res[::-1])
    r1 = estimate_rho(d1, np.zeros(1), GAUSSIAN, "ar1")
    r2 = estimate_rho(d2, np.zeros(1), GAUSSIAN, "ar1")
    assert r1 == pytest.approx(r2, rel=1e-12)


def test_estimate_rho_no_pairs():
    data = _dataset_from_residuals([np.ones(1), np.ones(1)])
    with pytest.raises(ValueError, match="independence"):
        estimate_rho(data, np.zeros(1), GAUSSIAN, "exchangeable")
