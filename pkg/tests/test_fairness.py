"""Fairness pipeline tests: fits, weight solvers, prediction, orderings."""

import numpy as np
import pytest

from otmaxent import (
    FairDataset,
    FairRegression,
    WeightedSample,
    fit_in_model,
    fit_two_step,
    fit_unconstrained,
    predict_fair,
    synth_fair_data,
    w2sq_discrete_discrete,
)
from otmaxent.exceptions import FitError
from otmaxent.fairness import _optimize_t_weights
from otmaxent._solver import SolverConfig


def identical_group_data(n=40, p=3, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    y = x @ np.arange(1.0, p + 1) + rng.standard_normal(n)
    xx = np.vstack((x, x))
    yy = np.concatenate((y, y))
    groups = np.array(["S"] * n + ["T"] * n)
    return FairDataset(xx, yy, groups)


class TestDataset:
    def test_s_first_ordering(self):
        x = np.arange(8.0).reshape(4, 2)
        y = np.arange(4.0)
        data = FairDataset(x, y, np.array(["T", "S", "T", "S"]))
        assert data.n_s == 2 and data.n_t == 2
        np.testing.assert_array_equal(data.groups[:2], ["S", "S"])
        np.testing.assert_array_equal(data.y_s, [1.0, 3.0])

    def test_rejects_single_group(self):
        with pytest.raises(ValueError):
            FairDataset(np.ones((3, 1)), np.ones(3), np.array(["S", "S", "S"]))

    def test_rejects_unknown_labels(self):
        with pytest.raises(ValueError):
            FairDataset(np.ones((2, 1)), np.ones(2), np.array(["A", "B"]))


class TestUnconstrained:
    def test_identical_groups(self):
        data = identical_group_data()
        fit = fit_unconstrained(data)
        np.testing.assert_allclose(fit.theta_s, fit.theta_t, atol=1e-10)
        assert fit.w2sq == pytest.approx(0.0, abs=1e-12)

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((30, 2))
        beta = np.array([2.0, -1.0, 0.5])
        y = np.column_stack((np.ones(30), x)) @ beta
        data = FairDataset(
            np.vstack((x, x + 0.3)),
            np.concatenate((y, np.column_stack((np.ones(30), x + 0.3)) @ beta)),
            np.array(["S"] * 30 + ["T"] * 30),
        )
        fit = fit_unconstrained(data)
        np.testing.assert_allclose(fit.theta_s, beta, atol=1e-8)
        np.testing.assert_allclose(fit.theta_t, beta, atol=1e-8)
        assert fit.sigma2 <= 1e-10

    def test_shifted_responses_shift_intercept(self):
        data = synth_fair_data(gap=7.0, seed=2)
        fit = fit_unconstrained(data)
        assert fit.theta_t[0] - fit.theta_s[0] == pytest.approx(7.0, abs=0.5)

    def test_rank_deficient_design(self):
        x = np.ones((12, 2))  # intercept column duplicated
        y = np.arange(12.0)
        data = FairDataset(x, y, np.array(["S"] * 6 + ["T"] * 6))
        with pytest.raises(FitError):
            fit_unconstrained(data)


class TestTwoStep:
    def test_pure_entropy_is_uniform(self):
        data = synth_fair_data(seed=3)
        fit = fit_two_step(data, 1.0)
        np.testing.assert_allclose(fit.weights, 1.0 / data.n_t, atol=1e-12)
        assert fit.entropy == pytest.approx(np.log(data.n_t), abs=1e-12)

    def test_three_atom_grid_oracle(self):
        # S concentrated at a constant; T has three atoms
        h_s = np.full(5, 0.5)
        h_t = np.array([0.0, 1.0, 3.0])
        w, _ = _optimize_t_weights(h_s, h_t, 0.0, SolverConfig())
        s_sample = WeightedSample(h_s)

        def w2_t(weights):
            return w2sq_discrete_discrete(s_sample, WeightedSample(h_t, weights))

        step = 1e-3
        best = np.inf
        grid = np.arange(step, 1.0, step)
        for w1 in grid:
            for w2 in np.arange(step, 1.0 - w1, step):
                value = w2_t(np.array([w1, w2, 1.0 - w1 - w2]))
                best = min(best, value)
        achieved = w2_t(w)
        assert achieved <= best + 1e-4
        assert achieved <= w2_t(np.full(3, 1 / 3)) + 1e-12
        # mass concentrates toward the atoms nearest the S constant
        assert w[2] < 0.05

    def test_entropy_nondecreasing_in_lambda(self):
        data = synth_fair_data(seed=4)
        entropies = [fit_two_step(data, lam).entropy for lam in np.linspace(0, 1, 6)]
        assert np.all(np.diff(entropies) >= -1e-9)


class TestInModel:
    def test_gibbs_weights_at_pure_entropy_fixed_theta(self):
        # with theta fixed and lam = 1 the weight block maximizes
        # -sum w l - sum w log w, whose solution is w ~ exp(-l)
        rng = np.random.default_rng(5)
        h_s = rng.normal(0, 1, 20)
        h_t = rng.normal(0.5, 1, 15)
        loss = rng.uniform(0.0, 3.0, 15)
        w, _ = _optimize_t_weights(h_s, h_t, 1.0, SolverConfig(), loss_t=loss)
        expected = np.exp(-loss)
        expected /= expected.sum()
        np.testing.assert_allclose(w, expected, atol=1e-5)

    def test_identical_groups_keep_near_uniform_weights(self):
        data = identical_group_data()
        fit = fit_in_model(data, 0.5)
        assert fit.w2sq <= 0.05
        assert fit.entropy >= 0.99 * np.log(data.n_t)

    def test_objective_monotone_and_converged(self):
        data = synth_fair_data(seed=6)
        fit = fit_in_model(data, 0.0)
        assert fit.converged

    def test_entropy_nondecreasing_in_lambda(self):
        data = synth_fair_data(seed=7)
        entropies = [fit_in_model(data, lam).entropy for lam in np.linspace(0, 1, 6)]
        assert np.all(np.diff(entropies) >= -1e-9)

    def test_weights_cover_only_t_group(self):
        data = synth_fair_data(seed=8)
        for fit in (fit_unconstrained(data), fit_two_step(data, 0.3), fit_in_model(data, 0.3)):
            assert fit.weights.shape == (data.n_t,)


class TestOrdering:
    def test_w2_ordering_on_calibrated_analog(self):
        for seed in (0, 1, 2):
            data = synth_fair_data(seed=seed)
            unc = fit_unconstrained(data)
            two = fit_two_step(data, 0.0)
            inm = fit_in_model(data, 0.0)
            assert unc.w2 > two.w2 > 0
            assert inm.w2 <= two.w2 + 1e-6
            assert unc.w2 > 10 * two.w2

    def test_zero_gap_is_nearly_fair_already(self):
        data = synth_fair_data(gap=0.0, seed=9)
        unc = fit_unconstrained(data)
        assert unc.w2sq < 0.5


class TestPrediction:
    def test_s_group_is_linear(self):
        data = synth_fair_data(seed=10)
        fit = fit_unconstrained(data)
        x = data.x_s[:5]
        expected = np.column_stack((np.ones(5), x)) @ fit.theta_s
        np.testing.assert_allclose(predict_fair(fit, x, "S"), expected, rtol=1e-12)

    def test_small_bandwidth_recovers_training_point(self):
        data = synth_fair_data(seed=11)
        fit = fit_two_step(data, 0.5)
        x0 = data.x_t[[3]]
        fitted = (np.concatenate(([1.0], data.x_t[3])) @ fit.theta_t)
        pred = predict_fair(fit, x0, "T", bandwidth=1e-3)
        assert pred[0] == pytest.approx(fitted, rel=1e-6)

    def test_huge_bandwidth_gives_weighted_mean(self):
        data = synth_fair_data(seed=12)
        fit = fit_unconstrained(data)  # uniform weights
        fitted = np.column_stack((np.ones(data.n_t), data.x_t)) @ fit.theta_t
        pred = predict_fair(fit, data.x_t[[0]], "T", bandwidth=1e6)
        assert pred[0] == pytest.approx(fitted.mean(), rel=1e-5)

    def test_direct_formula_oracle_one_dim(self):
        x_t = np.array([[0.0], [1.0], [2.0]])
        y_t = np.array([0.0, 1.0, 2.0])
        x_s = np.array([[0.0], [1.0]])
        y_s = np.array([0.1, 1.1])
        data = FairDataset(
            np.vstack((x_s, x_t)),
            np.concatenate((y_s, y_t)),
            np.array(["S", "S", "T", "T", "T"]),
        )
        fit = fit_unconstrained(data)
        b = 0.7
        x0 = np.array([[0.4]])
        fitted = np.column_stack((np.ones(3), x_t)) @ fit.theta_t
        kernel = np.exp(-0.5 * ((0.4 - x_t[:, 0]) / b) ** 2) * fit.weights
        expected = kernel @ fitted / kernel.sum()
        assert predict_fair(fit, x0, "T", bandwidth=b)[0] == pytest.approx(expected, rel=1e-12)

    def test_far_point_falls_back_with_warning(self):
        data = synth_fair_data(seed=13)
        fit = fit_unconstrained(data)
        x_far = np.full((1, data.x_t.shape[1]), 1e6)
        with pytest.warns(RuntimeWarning, match="kernel mass"):
            pred = predict_fair(fit, x_far, "T", bandwidth=0.01)
        expected = np.concatenate(([1.0], x_far[0])) @ fit.theta_t
        assert pred[0] == pytest.approx(expected, rel=1e-12)


class TestEstimator:
    def test_fit_predict_flow(self):
        data = synth_fair_data(seed=14)
        est = FairRegression(method="two_step", lambda_star=0.2)
        est.fit(data.x, data.y, data.groups)
        assert est.weights_.shape == (data.n_t,)
        preds = est.predict(data.x[:10], data.groups[:10])
        assert preds.shape == (10,)
        assert np.all(np.isfinite(preds))

    def test_get_params(self):
        est = FairRegression(method="in_model", lambda_star=0.4)
        params = est.get_params()
        assert params["lambda_star"] == 0.4
        assert params["method"] == "in_model"

    def test_unknown_method(self):
        data = synth_fair_data(seed=15)
        with pytest.raises(ValueError):
            FairRegression(method="nope").fit(data.x, data.y, data.groups)
