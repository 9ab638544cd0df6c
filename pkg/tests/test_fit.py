import math

import numpy as np
import pytest
from scipy import stats

from oracles import expected_information
from robust_evt.fit import (
    block_maxima,
    fit_gev_mle,
    gev_loglik,
    gev_loglik_grad,
    quantile_stderr,
    return_level,
    return_level_stderr,
    scaled_gradient,
)
from robust_evt.gev import GevParams, gev_pdf, gev_quantile, gev_sample

RAIN = GevParams(0.1072, 9.7284, 40.7830)


def vec(p):
    return np.array([p.shape, p.scale, p.location])


def draws(params, n, seed):
    return gev_sample(params, n, np.random.default_rng(seed))


def test_block_maxima_examples():
    bm = block_maxima([3, 1, 4, 1, 5, 9, 2, 6], 4)
    assert bm.maxima.tolist() == [4, 9] and bm.dropped_tail_count == 0
    bm = block_maxima([3, 1, 4, 1, 5, 9, 2], 4)
    assert bm.maxima.tolist() == [4] and bm.dropped_tail_count == 3


def test_block_maxima_pareto_fixture_size():
    x = 1 + np.random.default_rng(0).pareto(3.0, 100)
    assert len(block_maxima(x, 5).maxima) == 20


def test_block_maxima_invariants():
    x = np.random.default_rng(3).normal(size=103)
    bm = block_maxima(x, 10)
    assert len(bm.maxima) * bm.block_size + bm.dropped_tail_count == len(x)
    for i, m in enumerate(bm.maxima):
        assert m >= x[10 * i : 10 * i + 10].max()
    assert np.array_equal(block_maxima(x, 1).maxima, x)


@pytest.mark.parametrize("n,data", [(5, [1.0, 2.0]), (0, [1.0]), (1, [])])
def test_block_maxima_errors(n, data):
    with pytest.raises(ValueError):
        block_maxima(data, n)


def test_loglik_matches_scipy():
    x = draws(RAIN, 50, 1)
    theta = np.array([0.15, 9.0, 41.0])
    expected = stats.genextreme.logpdf(x, -0.15, loc=41.0, scale=9.0).sum()
    assert gev_loglik(theta, x) == pytest.approx(expected, rel=1e-12)
    assert gev_loglik(np.array([0.0, 9.0, 41.0]), x) == pytest.approx(
        stats.gumbel_r.logpdf(x, loc=41.0, scale=9.0).sum(), rel=1e-12
    )


def test_loglik_infeasible_is_minus_inf():
    assert gev_loglik(np.array([-0.5, 1.0, 0.0]), np.array([0.0, 5.0])) == -math.inf


@pytest.mark.parametrize("theta", [[0.2, 1.3, 0.4], [-0.2, 0.8, -0.1], [0.0, 1.0, 0.0], [1e-8, 1.0, 0.0]])
def test_loglik_gradient_finite_differences(theta):
    theta = np.array(theta)
    x = draws(GevParams(*theta), 40, 2)
    grad = gev_loglik_grad(theta, x)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (gev_loglik(theta + e, x) - gev_loglik(theta - e, x)) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_gumbel_recovery():
    fit = fit_gev_mle(draws(GevParams(0.0), 10_000, 2024))
    assert fit.converged
    assert fit.params.shape == pytest.approx(0.0, abs=0.05)
    assert fit.params.scale == pytest.approx(1.0, abs=0.05)
    assert fit.params.location == pytest.approx(0.0, abs=0.05)
    assert np.max(np.abs(scaled_gradient(vec(fit.params), draws(GevParams(0.0), 10_000, 2024)))) <= 1e-6


def test_recovery_within_three_standard_errors():
    truth = GevParams(0.22, 0.55, 2.3)
    fit = fit_gev_mle(draws(truth, 200, 11))
    err = np.abs(vec(fit.params) - vec(truth))
    assert np.all(err <= 3 * fit.stderr)


def test_matches_scipy_fit():
    x = draws(RAIN, 300, 5)
    fit = fit_gev_mle(x)
    c, loc, scale = stats.genextreme.fit(x, 0.0, loc=40, scale=10)
    ll_scipy = stats.genextreme.logpdf(x, c, loc=loc, scale=scale).sum()
    # our optimum is at least as good as scipy's
    assert fit.log_likelihood >= ll_scipy - 1e-6
    assert fit.params.shape == pytest.approx(-c, abs=5e-3)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_small_at_optimum(seed):
    rng = np.random.default_rng(seed)
    truth = GevParams(rng.uniform(-0.3, 0.5), rng.uniform(0.5, 5), rng.uniform(-10, 10))
    x = gev_sample(truth, 150, rng)
    fit = fit_gev_mle(x)
    assert fit.converged
    assert np.max(np.abs(scaled_gradient(vec(fit.params), x))) <= 1e-6


def test_likelihood_dominates_perturbations():
    x = draws(RAIN, 100, 9)
    fit = fit_gev_mle(x)
    rng = np.random.default_rng(0)
    base = vec(fit.params)
    checked = 0
    while checked < 50:
        theta = base + rng.normal(scale=[0.02, 0.2, 0.3])
        ll = gev_loglik(theta, x)
        if math.isfinite(ll):
            assert ll <= fit.log_likelihood + 1e-9
            checked += 1


def test_location_scale_equivariance():
    x = draws(GevParams(0.1), 200, 4)
    f1 = fit_gev_mle(x)
    f2 = fit_gev_mle(3.0 * x + 7.0)
    assert f2.params.shape == pytest.approx(f1.params.shape, abs=1e-6)
    assert f2.params.scale == pytest.approx(3.0 * f1.params.scale, rel=1e-6)
    assert f2.params.location == pytest.approx(3.0 * f1.params.location + 7.0, rel=1e-6)


def test_fit_result_invariants():
    x = draws(RAIN, 80, 6)
    fit = fit_gev_mle(x, confidence=0.9)
    assert fit.gamma_ci[0] < fit.params.shape < fit.gamma_ci[1]
    assert np.allclose(fit.covariance, fit.covariance.T)
    assert np.all(np.linalg.eigvalsh(fit.covariance) >= 0)
    assert np.all(gev_pdf(x, fit.params) > 0)
    z = stats.norm.ppf(0.95)
    assert fit.gamma_halfwidth == pytest.approx(z * math.sqrt(fit.covariance[0, 0]))


def test_small_sample_warns():
    fit = fit_gev_mle([1.0, 2.5, 1.7, 3.1, 2.2, 1.9, 2.8])
    assert any("unreliable" in w for w in fit.warnings)
    assert not fit_gev_mle(draws(RAIN, 30, 1)).warnings


@pytest.mark.parametrize("data", [[1.0, 2.0], [1.0, math.nan, 2.0, 3.0], [2.0] * 20])
def test_fit_errors(data):
    with pytest.raises(ValueError):
        fit_gev_mle(data)


def test_return_level_examples():
    assert return_level(RAIN, 100) == pytest.approx(98.63, abs=0.05)
    assert return_level(GevParams(0.0), 1 / (1 - math.exp(-1))) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        return_level(RAIN, 1.0)


def test_quantile_stderr_delta_method_by_finite_differences():
    cov = np.array([[0.01, 0.002, -0.01], [0.002, 1.0, 0.3], [-0.01, 0.3, 2.0]])
    for params in (RAIN, GevParams(0.0, 2.0, 1.0), GevParams(-0.2, 1.0, 0.0)):
        theta = vec(params)
        grad = np.zeros(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1e-6
            grad[i] = (gev_quantile(0.99, GevParams(*(theta + e))) - gev_quantile(0.99, GevParams(*(theta - e)))) / 2e-6
        expected = math.sqrt(grad @ cov @ grad)
        assert quantile_stderr(params, cov, 0.99) == pytest.approx(expected, rel=1e-5)
    assert return_level_stderr(RAIN, cov, 100) == quantile_stderr(RAIN, cov, 0.99)


def test_rainfall_return_level_standard_error():
    # 95% half-width 17.67 read as 1.96 standard errors
    cov = np.linalg.inv(expected_information(RAIN.shape, RAIN.scale, 48))
    assert return_level_stderr(RAIN, cov, 100) == pytest.approx(17.67 / 1.96, rel=0.15)


def test_rainfall_return_level_standard_error_as_stated_value():
    # the same figure read as one standard error
    cov = np.linalg.inv(expected_information(RAIN.shape, RAIN.scale, 48))
    assert return_level_stderr(RAIN, cov, 100) == pytest.approx(17.67, rel=0.15)
