import numpy as np
import pytest

from pwgee.family import BINOMIAL, GAUSSIAN, POISSON, VARIANCE_FLOOR, FamilySpec


def test_mean_values():
    assert GAUSSIAN.mean(2.5) == 2.5
    assert POISSON.mean(0.0) == 1.0
    assert BINOMIAL.mean(0.0) == 0.5


def test_mean_deriv_values():
    assert GAUSSIAN.mean_deriv(-7.0) == 1.0
    assert BINOMIAL.mean_deriv(0.0) == pytest.approx(0.25)
    assert POISSON.mean_deriv(1.0) == pytest.approx(np.e)


def test_variance_values():
    assert GAUSSIAN.variance(3.0) == 1.0
    assert POISSON.variance(0.0) == 1.0
    v = BINOMIAL.variance(80.0)
    assert v == VARIANCE_FLOOR
    assert BINOMIAL.variance_floor_count(np.array([80.0, 0.0, -80.0])) == 2


def test_deriv_matches_finite_difference():
    h = 1e-6
    for fam in (GAUSSIAN, POISSON, BINOMIAL):
        for eta in (-3.0, -1.0, 0.0, 1.0, 3.0):
            fd = (fam.mean(eta + h) - fam.mean(eta - h)) / (2 * h)
            d = fam.mean_deriv(eta)
            assert d == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_variance_identities():
    eta = np.linspace(-4, 4, 33)
    np.testing.assert_array_equal(POISSON.variance(eta), POISSON.mean(eta))
    mu = BINOMIAL.mean(eta)
    np.testing.assert_array_equal(BINOMIAL.variance(eta), mu * (1 - mu))


def test_logit_overflow_safe():
    assert BINOMIAL.mean(800.0) == 1.0
    assert BINOMIAL.mean(-800.0) == 0.0
    assert np.isfinite(BINOMIAL.mean_deriv(800.0))


def test_validate_response():
    POISSON.validate_response([0.0, 3.0, 10.0])
    with pytest.raises(ValueError):
        POISSON.validate_response([1.5])
    with pytest.raises(ValueError):
        POISSON.validate_response([-1.0])
    BINOMIAL.validate_response([0.0, 1.0])
    with pytest.raises(ValueError):
        BINOMIAL.validate_response([0.5])
    with pytest.raises(ValueError):
        GAUSSIAN.validate_response([np.nan])


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown family"):
        FamilySpec("gamma")
