"""Portfolio tests: mean-variance KKT, stats, targets, entropy/transport sweep."""

import numpy as np
import pytest

from otmaxent import (
    EntropyTransportPortfolio,
    MeanVariancePortfolio,
    Normal,
    WeightedSample,
    entropy,
    entropy_w2_portfolio,
    mv_sweep,
    mv_weights,
    portfolio_stats,
    sweep_lambda,
    synthetic_returns,
    target_from_mv,
    w2sq_discrete_continuous,
)
from otmaxent.utils import philox_stream


class TestMeanVariance:
    def test_single_asset(self):
        rng = np.random.default_rng(0)
        result = mv_weights(rng.normal(0.01, 0.05, (50, 1)), 2.0)
        np.testing.assert_allclose(result.weights, [1.0], atol=1e-12)

    def test_symmetric_pair_splits_evenly(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0.0, 1.0, 400)
        b = rng.normal(0.0, 1.0, 400)
        # symmetrize: both assets get identical mean and variance, zero cov
        r = np.column_stack((np.concatenate((a, b)), np.concatenate((b, a))))
        result = mv_weights(r, 4.0)
        np.testing.assert_allclose(result.weights, [0.5, 0.5], atol=1e-6)

    def test_diagonal_closed_form(self):
        # equal means, exactly uncorrelated assets: weights ~ 1/variance
        rng = np.random.default_rng(2)
        raw = rng.standard_normal((500, 3))
        raw -= raw.mean(axis=0)
        q, _ = np.linalg.qr(raw)  # orthogonal, still zero-mean columns
        sds = np.array([1.0, 2.0, 4.0])
        r = q * np.sqrt(500) * sds
        result = mv_weights(r, 50.0)
        sample_vars = r.var(axis=0)
        expected = (1 / sample_vars) / np.sum(1 / sample_vars)
        np.testing.assert_allclose(result.weights, expected, atol=1e-6)

    def test_kkt_residual_on_random_instances(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            r = rng.normal(0.01, 0.05, (60, 4)) + 0.02 * rng.standard_normal((60, 1))
            result = mv_weights(r, float(rng.uniform(0.5, 5.0)))
            mu = r.mean(axis=0)
            sigma = (r - mu).T @ (r - mu) / r.shape[0]
            grad = mu - result.risk_aversion * sigma @ result.weights
            active = result.weights > 1e-12
            nu = grad[active].mean()
            assert np.max(np.abs(grad[active] - nu)) <= 1e-7
            if np.any(~active):
                assert np.max(grad[~active] - nu) <= 1e-7

    def test_zero_risk_aversion_ties_flagged(self):
        r = np.column_stack((np.linspace(-1, 1, 10), np.linspace(-1, 1, 10)))
        result = mv_weights(r, 0.0)
        assert result.degenerate
        assert result.weights.sum() == pytest.approx(1.0)


class TestStats:
    def test_constant_returns_flagged(self):
        r = np.ones((20, 2))
        stats = portfolio_stats(r, np.array([0.5, 0.5]))
        assert stats.variance == 0.0
        assert np.isnan(stats.skewness) and np.isnan(stats.excess_kurtosis)

    def test_symmetric_two_point_distribution(self):
        atoms = np.array([[1.0], [-1.0]] * 30)
        stats = portfolio_stats(atoms, np.array([1.0]))
        assert stats.skewness == pytest.approx(0.0, abs=1e-12)

    def test_matches_direct_recomputation(self):
        rng = np.random.default_rng(4)
        r = rng.normal(0.01, 0.08, (120, 5))
        w = rng.dirichlet(np.ones(5))
        stats = portfolio_stats(r, w)
        atoms = r @ w
        mean = atoms.mean()
        var = ((atoms - mean) ** 2).mean()
        skew = ((atoms - mean) ** 3).mean() / var**1.5
        kurt = ((atoms - mean) ** 4).mean() / var**2 - 3
        assert stats.mean == pytest.approx(mean, rel=1e-12)
        assert stats.variance == pytest.approx(var, rel=1e-12)
        assert stats.skewness == pytest.approx(skew, rel=1e-12)
        assert stats.excess_kurtosis == pytest.approx(kurt, rel=1e-12)

    def test_zero_weight_count(self):
        r = np.random.default_rng(5).normal(size=(30, 4))
        stats = portfolio_stats(r, np.array([0.5, 0.5, 0.0, 1e-9]))
        assert stats.zero_weights == 2


class TestTargetFromMv:
    def test_symmetric_returns_give_small_shape(self):
        rng = np.random.default_rng(6)
        r = rng.normal(0.01, 0.05, (5000, 3))
        target = target_from_mv(r, 2.0)
        assert abs(target.moments()[2]) < 0.2

    def test_calibrated_returns_give_negative_shape(self):
        target = target_from_mv(synthetic_returns(), 1.0)
        assert target.shape < 0

    def test_moment_round_trip(self):
        returns = synthetic_returns()
        result = mv_weights(returns, 1.0)
        target = target_from_mv(returns, 1.0)
        np.testing.assert_allclose(
            target.moments(),
            (result.stats.mean, result.stats.variance, result.stats.skewness),
            rtol=1e-8,
        )

    def test_extreme_skewness_errors_or_clips(self):
        # the best-mean asset carries a single huge crash, so the selected
        # portfolio's sample skewness is far beyond the skew-normal bound
        values = np.full((60, 2), 0.1)
        values[:, 1] = np.random.default_rng(7).normal(0.0, 0.001, 60)
        values[0, 0] = -5.0
        assert mv_weights(values, 0.0).weights[0] == 1.0
        with pytest.raises(ValueError, match="skew"):
            target_from_mv(values, 0.0)
        clipped = target_from_mv(values, 0.0, clip_skewness=True)
        assert abs(clipped.moments()[2]) == pytest.approx(0.95, abs=1e-9)


class TestEntropyTransport:
    def test_single_asset_rejected(self):
        with pytest.raises(ValueError):
            entropy_w2_portfolio(np.random.default_rng(8).normal(size=(30, 1)), Normal(0, 1), 0.5)

    def test_pure_entropy_is_uniform(self):
        returns = synthetic_returns()
        result = entropy_w2_portfolio(returns, target_from_mv(returns), 1.0)
        np.testing.assert_allclose(result.weights, 0.2, atol=1e-8)
        assert abs(result.entropy - np.log(5)) < 1e-12
        assert result.bd_entropy == pytest.approx(1.0, abs=1e-12)

    def test_bd_entropy_in_unit_interval_and_atoms_consistent(self):
        returns = synthetic_returns()
        target = target_from_mv(returns)
        for lam in (0.0, 0.4, 0.9):
            result = entropy_w2_portfolio(returns, target, lam)
            assert 0.0 <= result.bd_entropy <= 1.0 + 1e-12
            np.testing.assert_allclose(result.atoms, returns.values @ result.weights, rtol=1e-12)

    def test_objective_beats_uniform(self):
        returns = synthetic_returns()
        target = target_from_mv(returns)
        d = returns.n_assets
        uniform = np.full(d, 1.0 / d)
        for lam in (0.0, 0.5):
            result = entropy_w2_portfolio(returns, target, lam)
            sample = WeightedSample(returns.values @ uniform)
            uniform_obj = (1 - lam) * w2sq_discrete_continuous(sample, target) - lam * (
                1 / np.log(d)
            ) * entropy(uniform)
            assert result.objective <= uniform_obj + 1e-9

    def test_two_asset_grid_oracle(self):
        rng = philox_stream(123, 9)
        r = rng.normal(0.5, 1.0, (8, 2))
        r[:, 1] += 0.8
        target = Normal(0.6, 1.2)
        lam = 0.3
        result = entropy_w2_portfolio(r, target, lam)

        def objective(w1):
            w = np.array([w1, 1 - w1])
            sample = WeightedSample(r @ w)
            h = entropy(w)
            return (1 - lam) * w2sq_discrete_continuous(sample, target) - lam * h / np.log(2)

        grid = np.arange(1e-4, 1.0, 1e-4)
        best = min(objective(g) for g in grid)
        assert objective(result.weights[0]) <= best + 1e-5

    def test_deterministic_given_state(self):
        returns = synthetic_returns()
        target = target_from_mv(returns)
        a = entropy_w2_portfolio(returns, target, 0.3, random_state=5)
        b = entropy_w2_portfolio(returns, target, 0.3, random_state=5)
        np.testing.assert_array_equal(a.weights, b.weights)


class TestSweeps:
    def test_single_point_grid(self):
        returns = synthetic_returns()
        rows = sweep_lambda(returns, target_from_mv(returns), grid=[1.0])
        assert len(rows) == 1
        np.testing.assert_allclose(rows[0].weights, 0.2, atol=1e-8)

    def test_full_sweep_monotone(self):
        returns = synthetic_returns()
        rows = sweep_lambda(returns, target_from_mv(returns))
        entropies = [row.entropy for row in rows]
        w2s = [row.w2sq for row in rows]
        assert np.all(np.diff(entropies) >= -1e-9)
        assert np.all(np.diff(w2s) >= -1e-9)
        assert entropies[0] <= min(entropies) + 1e-9
        assert abs(entropies[-1] - np.log(5)) < 1e-12

    def test_mv_sweep_zero_count_trend(self):
        returns = synthetic_returns()
        rows = mv_sweep(returns)
        zero_counts = [row.stats.zero_weights for row in rows]
        assert zero_counts[0] >= zero_counts[-1]
        assert np.all(np.diff(zero_counts) <= 0)

    def test_mv_sweep_symmetric_returns_have_flat_skew(self):
        rng = np.random.default_rng(10)
        r = rng.normal(0.01, 0.05, (4000, 3))
        rows = mv_sweep(r, grid=[0.5, 1.0, 5.0])
        for row in rows:
            assert abs(row.stats.skewness) < 0.15

    def test_calibrated_mv_zero_weights_at_unit_risk_aversion(self):
        result = mv_weights(synthetic_returns(), 1.0)
        assert abs(result.stats.zero_weights - 3) <= 1
        assert result.stats.skewness < -0.1
        assert result.stats.excess_kurtosis > 0.1


class TestEstimators:
    def test_mean_variance_estimator(self):
        est = MeanVariancePortfolio(risk_aversion=1.0).fit(synthetic_returns().values)
        assert est.weights_.shape == (5,)
        assert est.stats_.zero_weights >= 2

    def test_entropy_transport_estimator_auto_target(self):
        est = EntropyTransportPortfolio(lambda_star=0.5).fit(synthetic_returns().values)
        assert est.weights_.shape == (5,)
        assert est.target_.shape < 0
        assert 0 <= est.bd_entropy_ <= 1
